"""Integer scalar, integer vector and pointer types."""

from __future__ import annotations

import re
from dataclasses import dataclass

LANE_WIDTHS = (1, 4, 8, 16, 32, 64)
MAX_BITS = 512


class TypeError_(ValueError):
    """Raised for malformed or out-of-range types."""


@dataclass(frozen=True, order=True)
class Type:
    """``iN`` (lanes == 1, vector False), ``<L x iN>`` or ``ptr``."""

    width: int
    lanes: int = 1
    vector: bool = False
    pointer: bool = False

    def __post_init__(self):
        if self.pointer:
            return
        if self.width not in LANE_WIDTHS:
            raise TypeError_(f"unsupported lane width i{self.width}")
        if self.vector and self.lanes < 2:
            raise TypeError_("vector types need at least 2 lanes")
        if not self.vector and self.lanes != 1:
            raise TypeError_("scalar types have exactly one lane")
        if self.lanes * self.width > MAX_BITS:
            raise TypeError_(f"type wider than {MAX_BITS} bits")

    @property
    def bits(self) -> int:
        return self.lanes * self.width

    @property
    def mask(self) -> int:
        return (1 << self.width) - 1

    @property
    def is_int(self) -> bool:
        return not self.pointer

    def with_width(self, width: int) -> "Type":
        return Type(width, self.lanes, self.vector)

    def element(self) -> "Type":
        return Type(self.width)

    def __str__(self) -> str:
        if self.pointer:
            return "ptr"
        if self.vector:
            return f"<{self.lanes} x i{self.width}>"
        return f"i{self.width}"

    def descriptor(self) -> str:
        """Short shape tag used in cost tables: ``v8i32`` or ``i64``."""
        if self.vector:
            return f"v{self.lanes}i{self.width}"
        return f"i{self.width}"


PTR = Type(64, pointer=True)


def int_type(width: int) -> Type:
    return Type(width)


def vec_type(lanes: int, width: int) -> Type:
    return Type(width, lanes, True)


def shape(lanes: int, width: int) -> Type:
    """Vector type for ``lanes`` > 1, scalar otherwise."""
    return vec_type(lanes, width) if lanes > 1 else int_type(width)


_TYPE_RE = re.compile(r"^\s*(?:<\s*(\d+)\s*x\s*i(\d+)\s*>|i(\d+)|(ptr))\s*$")


def parse_type(text: str) -> Type:
    m = _TYPE_RE.match(text)
    if not m:
        raise TypeError_(f"cannot parse type {text!r}")
    if m.group(4):
        return PTR
    if m.group(1):
        return vec_type(int(m.group(1)), int(m.group(2)))
    return int_type(int(m.group(3)))


def reinterpretations(total_bits: int) -> list[Type]:
    """All byte-lane views of a ``total_bits`` quantity.

    Vector shapes ``<L x iN>`` with N in {8, 16, 32, 64} and L >= 2, plus the
    scalar ``iN`` when the value fits in 64 bits.
    """
    out = []
    for w in (8, 16, 32, 64):
        if total_bits % w == 0 and total_bits // w >= 2 and total_bits <= MAX_BITS:
            out.append(vec_type(total_bits // w, w))
    if total_bits in LANE_WIDTHS:
        out.append(int_type(total_bits))
    return out
