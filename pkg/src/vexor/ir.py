"""The mini SSA IR: functions, blocks, instructions and terminators.

All objects are frozen; transformations build new functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Union

from .types import Type

BINARY_OPS = ("add", "sub", "mul", "udiv", "sdiv", "xor", "and", "or", "ashr", "lshr", "shl")
UNARY_OPS = ("ctpop", "ctlz", "cttz", "bswap", "bitreverse")
CONV_OPS = ("zext", "sext", "trunc", "bitcast")
ICMP_CONDS = ("eq", "ne", "ult", "ule", "slt", "sle")
VECTOR_OPS = ("insertelement", "extractelement", "shufflevector")
COMMUTATIVE = frozenset(("add", "mul", "xor", "and", "or"))


@dataclass(frozen=True)
class Ref:
    name: str

    def __str__(self):
        return f"%{self.name}"


@dataclass(frozen=True)
class Lit:
    """Literal lanes stored as unsigned bit patterns."""

    lanes: tuple[int, ...]

    @classmethod
    def of(cls, value: int, ty: Type) -> "Lit":
        return cls((value & ty.mask,) * ty.lanes)

    def __str__(self):
        if len(set(self.lanes)) == 1:
            return str(self.lanes[0])
        return "<" + ", ".join(str(v) for v in self.lanes) + ">"


Operand = Union[Ref, Lit]


@dataclass(frozen=True)
class Instruction:
    """One SSA instruction.

    ``ty`` is the result type (the stored type for ``store``); ``argty`` is
    the operand type where it differs from the result (icmp, conversions,
    vector ops, load pointer).  ``incoming`` holds the predecessor labels of
    a phi, parallel to ``args``.
    """

    dest: Optional[str]
    op: str
    args: tuple[Operand, ...]
    ty: Type
    argty: Optional[Type] = None
    cond: Optional[str] = None
    mask: Optional[tuple[int, ...]] = None
    callee: Optional[str] = None
    incoming: Optional[tuple[str, ...]] = None

    def refs(self) -> Iterator[str]:
        for a in self.args:
            if isinstance(a, Ref):
                yield a.name

    def with_args(self, args) -> "Instruction":
        return replace(self, args=tuple(args))


@dataclass(frozen=True)
class Terminator:
    kind: str  # "ret", "br", "cbr"
    args: tuple[Operand, ...] = ()
    targets: tuple[str, ...] = ()

    def refs(self) -> Iterator[str]:
        for a in self.args:
            if isinstance(a, Ref):
                yield a.name


@dataclass(frozen=True)
class Block:
    label: str
    insts: tuple[Instruction, ...]
    term: Terminator


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[tuple[str, Type], ...]
    ret_ty: Type
    blocks: tuple[Block, ...]
    _index: dict = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        index = {}
        for b in self.blocks:
            for i in b.insts:
                if i.dest is not None:
                    index[i.dest] = (b.label, i)
        object.__setattr__(self, "_index", index)

    @property
    def entry(self) -> Block:
        return self.blocks[0]

    def block(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def labels(self) -> list[str]:
        return [b.label for b in self.blocks]

    def param_types(self) -> dict[str, Type]:
        return dict(self.params)

    def definition(self, name: str) -> Optional[Instruction]:
        hit = self._index.get(name)
        return hit[1] if hit else None

    def def_block(self, name: str) -> Optional[str]:
        hit = self._index.get(name)
        return hit[0] if hit else None

    def instructions(self) -> Iterator[tuple[str, Instruction]]:
        for b in self.blocks:
            for i in b.insts:
                yield b.label, i

    def value_type(self, name: str) -> Type:
        for p, t in self.params:
            if p == name:
                return t
        inst = self.definition(name)
        if inst is None:
            raise KeyError(name)
        return inst.ty

    def value_names(self) -> list[str]:
        names = [p for p, _ in self.params]
        names += [i.dest for _, i in self.instructions() if i.dest is not None]
        return names

    def successors(self) -> dict[str, tuple[str, ...]]:
        return {b.label: b.term.targets for b in self.blocks}

    def predecessors(self) -> dict[str, list[str]]:
        preds = {b.label: [] for b in self.blocks}
        for b in self.blocks:
            for t in b.term.targets:
                if t in preds and b.label not in preds[t]:
                    preds[t].append(b.label)
        return preds


def operand_types(inst: Instruction, types: dict[str, Type]) -> list[Optional[Type]]:
    """The expected type of every operand position of ``inst``."""
    from .intrinsics import lookup

    op = inst.op
    if op in BINARY_OPS:
        return [inst.ty, inst.ty]
    if op in UNARY_OPS:
        return [inst.ty]
    if op in CONV_OPS:
        return [inst.argty]
    if op == "icmp":
        return [inst.argty, inst.argty]
    if op == "extractelement":
        return [inst.argty, Type(32)]
    if op == "insertelement":
        return [inst.ty, inst.ty.element(), Type(32)]
    if op == "shufflevector":
        return [inst.argty, inst.argty]
    if op == "phi":
        return [inst.ty] * len(inst.args)
    if op == "call":
        return list(lookup(inst.callee).operand_types())
    if op == "load":
        return [None]
    if op == "store":
        return [inst.ty, None]
    if op == "gep":
        return [None, None]
    raise ValueError(f"unknown opcode {op}")


def int_results(f: Function) -> list[str]:
    """Integer or integer-vector typed instruction results, in definition order."""
    return [i.dest for _, i in f.instructions() if i.dest is not None and i.ty.is_int]
