"""Parameterized registry of x86-style SIMD intrinsics.

Every intrinsic is an instance of a family (``pavg``, ``pmadd_wd``,
``pslli``, ``psrli``, ``psrai``) at some output shape, optionally masked.
Real x86 names are listed in :data:`NAMED`; any other shape is reachable
through a generic name such as ``pavg.v2i4`` or ``psrai.mask.v4i16``.
"""

from __future__ import annotations

import contextlib
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .kernels import U64, Batch, from_signed, lane_mask, to_signed
from .types import LANE_WIDTHS, Type, int_type, shape, vec_type

FAMILIES = ("pavg", "pmadd_wd", "pslli", "psrli", "psrai")
SHIFT_FAMILIES = ("pslli", "psrli", "psrai")
_TEXT_FAMILY = {"pavg": "pavg", "pmadd.wd": "pmadd_wd", "pslli": "pslli", "psrli": "psrli", "psrai": "psrai"}


class UnknownIntrinsic(KeyError):
    pass


@dataclass(frozen=True, order=True)
class IntrinsicDescriptor:
    family: str
    lanes: int
    width: int
    masked: bool = False

    @property
    def result_type(self) -> Type:
        return shape(self.lanes, self.width)

    @property
    def input_type(self) -> Type:
        if self.family == "pmadd_wd":
            return vec_type(2 * self.lanes, self.width // 2)
        return self.result_type

    @property
    def is_shift(self) -> bool:
        return self.family in SHIFT_FAMILIES

    def operand_types(self) -> tuple[Type, ...]:
        if self.is_shift:
            ops = (self.input_type, int_type(32))
        else:
            ops = (self.input_type, self.input_type)
        if self.masked:
            ops += (self.result_type, shape(self.lanes, 1))
        return ops

    @property
    def arity(self) -> int:
        return len(self.operand_types())

    @property
    def commutative(self) -> bool:
        return self.family in ("pavg", "pmadd_wd")


def _d(family, lanes, width, masked=False):
    return IntrinsicDescriptor(family, lanes, width, masked)


NAMED: dict[str, IntrinsicDescriptor] = {
    "mmx.pavg.b": _d("pavg", 8, 8),
    "mmx.pavg.w": _d("pavg", 4, 16),
    "sse2.pavg.b": _d("pavg", 16, 8),
    "sse2.pavg.w": _d("pavg", 8, 16),
    "avx2.pavg.b": _d("pavg", 32, 8),
    "avx2.pavg.w": _d("pavg", 16, 16),
    "avx512.pavg.b.512": _d("pavg", 64, 8),
    "avx512.pavg.w.512": _d("pavg", 32, 16),
    "avx512.mask.pavg.b": _d("pavg", 64, 8, True),
    "avx512.mask.pavg.w": _d("pavg", 32, 16, True),
    "mmx.pmadd.wd": _d("pmadd_wd", 2, 32),
    "sse2.pmadd.wd": _d("pmadd_wd", 4, 32),
    "avx2.pmadd.wd": _d("pmadd_wd", 8, 32),
    "avx512.pmaddw.d.512": _d("pmadd_wd", 16, 32),
    "avx512.mask.pmaddw.d.512": _d("pmadd_wd", 16, 32, True),
}
for _isa, _bits in (("mmx", 64), ("sse2", 128), ("avx2", 256), ("avx512", 512)):
    for _fam in SHIFT_FAMILIES:
        for _sfx, _w in (("w", 16), ("d", 32), ("q", 64)):
            if _fam == "psrai" and _sfx == "q" and _isa != "avx512":
                continue
            if _bits // _w < 2:
                continue
            _name = f"{_isa}.{_fam}.{_sfx}" + (".512" if _isa == "avx512" else "")
            NAMED[_name] = _d(_fam, _bits // _w, _w)

_BY_DESC = {}
for _n, _desc in NAMED.items():
    _BY_DESC.setdefault(_desc, _n)

_GENERIC = re.compile(r"^(pavg|pmadd\.wd|pslli|psrli|psrai)(\.mask)?\.v(\d+)i(\d+)$")


def valid(desc: IntrinsicDescriptor) -> bool:
    if desc.family not in FAMILIES or desc.width not in LANE_WIDTHS or desc.lanes < 2:
        return False
    if desc.family == "pmadd_wd" and desc.width // 2 not in LANE_WIDTHS:
        return False
    try:
        desc.operand_types()
    except ValueError:
        return False
    return desc.lanes * desc.width <= 512 and desc.input_type.bits <= 512


@lru_cache(maxsize=None)
def lookup(name: str) -> IntrinsicDescriptor:
    if name in NAMED:
        return NAMED[name]
    m = _GENERIC.match(name)
    if m:
        desc = _d(_TEXT_FAMILY[m.group(1)], int(m.group(3)), int(m.group(4)), bool(m.group(2)))
        if valid(desc):
            return desc
    raise UnknownIntrinsic(name)


def canonical_name(desc: IntrinsicDescriptor) -> str:
    """The x86 name when one exists, otherwise the generic shape name."""
    if desc in _BY_DESC:
        return _BY_DESC[desc]
    fam = "pmadd.wd" if desc.family == "pmadd_wd" else desc.family
    return f"{fam}{'.mask' if desc.masked else ''}.v{desc.lanes}i{desc.width}"


def registry() -> dict[str, IntrinsicDescriptor]:
    return dict(NAMED)


def descriptors_producing(ty: Type) -> list[IntrinsicDescriptor]:
    """Unmasked descriptors whose result type is ``ty``."""
    if not ty.vector:
        return []
    out = []
    for fam in FAMILIES:
        desc = _d(fam, ty.lanes, ty.width)
        if valid(desc):
            out.append(desc)
    return out


# ------------------------------------------------------------------ mutations
#
# Deliberate semantic bugs used to check that the differential tester has
# teeth.  Only the batched kernels consult these; the reference oracle never
# does.

MUTATIONS = {
    "pavg-wrapping-sum": "pavg sum computed at lane width (wraps on overflow)",
    "pmadd-16bit-products": "pmadd products truncated to the input lane width",
    "psrai-zero-fill": "psrai shifts in zeros instead of the sign bit",
    "psrli-nonsaturating": "psrli takes the immediate modulo the lane width",
    "mask-polarity-flip": "masked lanes select the computed value instead of passthrough",
}

_active_mutation: Optional[str] = None


@contextlib.contextmanager
def mutation(name: Optional[str]):
    global _active_mutation
    if name is not None and name not in MUTATIONS:
        raise KeyError(f"unknown mutation {name!r}")
    prev, _active_mutation = _active_mutation, name
    try:
        yield
    finally:
        _active_mutation = prev


# -------------------------------------------------------------------- kernels

def _apply_mask(desc, out_vals, out_poison, passthrough: Batch, mask: Batch):
    keep = mask.vals.astype(bool) & ~mask.poison
    if _active_mutation == "mask-polarity-flip":
        keep = ~keep
    vals = np.where(keep, out_vals, passthrough.vals)
    poison = np.where(keep, out_poison, passthrough.poison)
    # A poison mask bit makes the lane poison.
    poison = poison | mask.poison
    return vals, poison


def pavg(a: Batch, b: Batch, desc: IntrinsicDescriptor, passthrough=None, mask=None) -> Batch:
    w = desc.width
    x, y = a.vals, b.vals
    if _active_mutation == "pavg-wrapping-sum":
        r = ((x + y + U64(1)) & lane_mask(w)) >> U64(1)
    else:
        # ceil((x + y) / 2) without needing a wider intermediate.
        r = (x >> U64(1)) + (y >> U64(1)) + ((x | y) & U64(1))
    poison = a.poison | b.poison
    if desc.masked:
        r, poison = _apply_mask(desc, r, poison, passthrough, mask)
    return Batch(desc.result_type, r & lane_mask(w), poison)


def pmadd_wd(a: Batch, b: Batch, desc: IntrinsicDescriptor, passthrough=None, mask=None) -> Batch:
    half = desc.width // 2
    sa = to_signed(a.vals, half)
    sb = to_signed(b.vals, half)
    prod = sa * sb
    if _active_mutation == "pmadd-16bit-products":
        prod = to_signed(from_signed(prod, half), half)
    n = a.rows
    pairs = prod.reshape(n, desc.lanes, 2)
    r = from_signed(pairs[..., 0] + pairs[..., 1], desc.width)
    pa = a.poison.reshape(n, desc.lanes, 2).any(axis=-1)
    pb = b.poison.reshape(n, desc.lanes, 2).any(axis=-1)
    poison = pa | pb
    if desc.masked:
        r, poison = _apply_mask(desc, r, poison, passthrough, mask)
    return Batch(desc.result_type, r, poison)


def shift_imm(x: Batch, imm, desc: IntrinsicDescriptor, passthrough=None, mask=None) -> Batch:
    """Immediate shifts; ``imm`` is an int or an i32 :class:`Batch` (one amount per row)."""
    w = desc.width
    v = x.vals
    fam = desc.family
    if isinstance(imm, Batch):
        amt = imm.vals[:, :1]
        imm_poison = imm.poison[:, :1]
    else:
        amt = np.full((x.rows, 1), imm, dtype=U64)
        imm_poison = np.zeros((x.rows, 1), dtype=bool)
    over = amt >= U64(w)
    safe = np.where(over, U64(0), amt)
    if fam == "pslli":
        r = np.where(over, U64(0), (v << safe) & lane_mask(w))
    elif fam == "psrli":
        if _active_mutation == "psrli-nonsaturating":
            r = v >> (amt % U64(w))
        else:
            r = np.where(over, U64(0), v >> safe)
    elif _active_mutation == "psrai-zero-fill":
        r = np.where(over, U64(0), v >> safe)
    else:
        sh = np.where(over, U64(w - 1), amt).astype(np.int64)
        r = from_signed(to_signed(v, w) >> sh, w)
    poison = x.poison | imm_poison
    if desc.masked:
        r, poison = _apply_mask(desc, r, poison, passthrough, mask)
    return Batch(desc.result_type, r, poison)


def call(desc: IntrinsicDescriptor, args: list[Batch]) -> Batch:
    extra = args[2:] if desc.masked else []
    if desc.family == "pavg":
        return pavg(args[0], args[1], desc, *extra)
    if desc.family == "pmadd_wd":
        return pmadd_wd(args[0], args[1], desc, *extra)
    return shift_imm(args[0], args[1], desc, *extra)
