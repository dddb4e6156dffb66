"""Rewrite DAGs and their S-expression syntax.

::

    (shl (val i32 %0), (const i32 1), i32)
    (ctpop (bitcast (val i64 %x), <8 x i8>), <8 x i8>)
    (icmp eq (val <8 x i8> %x) (const <8 x i8> 46))
    (sse2.pavg.b (val <16 x i8> %a), (val <16 x i8> %b))
    (shufflevector (val <4 x i8> %a), (val <4 x i8> %a), (const <2 x i32> <3, 1>))
    (shl (val i8 %x), (hole i8), i8)

Nodes are immutable and hash-consed by structure, so shared subterms make
a DAG without any extra bookkeeping.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from . import ir
from .intrinsics import UnknownIntrinsic, lookup
from .types import Type, TypeError_, int_type, shape, vec_type


class RewriteError(ValueError):
    pass


@dataclass(frozen=True)
class Val:
    ty: Type
    name: str
    _h: int = field(default=0, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_h", hash(("val", self.ty, self.name)))

    def __hash__(self):
        return self._h


@dataclass(frozen=True)
class Const:
    ty: Type
    lanes: tuple[int, ...]
    _h: int = field(default=0, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_h", hash(("const", self.ty, self.lanes)))

    def __hash__(self):
        return self._h

    @classmethod
    def splat(cls, ty: Type, value: int) -> "Const":
        return cls(ty, (value & ty.mask,) * ty.lanes)


@dataclass(frozen=True)
class Hole:
    """A symbolic constant; ``index`` distinguishes holes of one rewrite."""

    ty: Type
    index: int = 0
    _h: int = field(default=0, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_h", hash(("hole", self.ty, self.index)))

    def __hash__(self):
        return self._h


@dataclass(frozen=True)
class Op:
    """An instruction node.  ``op`` is an IR opcode, ``"call"`` or ``"bitcast"``."""

    op: str
    args: tuple["Node", ...]
    ty: Type
    cond: Optional[str] = None
    mask: Optional[tuple[int, ...]] = None
    callee: Optional[str] = None
    _h: int = field(default=0, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_h", hash((self.op, self.args, self.ty, self.cond, self.mask, self.callee)))

    def __hash__(self):
        return self._h


Node = Union[Val, Const, Hole, Op]


# ----------------------------------------------------------------- traversal

def postorder(r: Node) -> list[Node]:
    """Unique nodes, children before parents."""
    seen, out = set(), []

    def go(n):
        if n in seen:
            return
        seen.add(n)
        if isinstance(n, Op):
            for a in n.args:
                go(a)
        out.append(n)

    go(r)
    return out


def inst_nodes(r: Node) -> list[Op]:
    return [n for n in postorder(r) if isinstance(n, Op)]


def inst_count(r: Node) -> int:
    """Instruction nodes, not counting bitcasts (they have no runtime form)."""
    return sum(1 for n in inst_nodes(r) if n.op != "bitcast")


def holes(r: Node) -> list[Hole]:
    return sorted({n for n in postorder(r) if isinstance(n, Hole)}, key=lambda h: h.index)


def vals(r: Node) -> list[Val]:
    return [n for n in postorder(r) if isinstance(n, Val)]


def substitute(r: Node, mapping: dict) -> Node:
    """Replace nodes (typically holes) by other nodes, rebuilding parents."""
    memo = {}

    def go(n):
        if n in mapping:
            return mapping[n]
        if not isinstance(n, Op):
            return n
        if n in memo:
            return memo[n]
        out = Op(n.op, tuple(go(a) for a in n.args), n.ty, n.cond, n.mask, n.callee)
        memo[n] = out
        return out

    return go(r)


def rename_vals(r: Node, names: dict[str, str]) -> Node:
    mapping = {v: Val(v.ty, names.get(v.name, v.name)) for v in vals(r)}
    return substitute(r, mapping)


def fill_holes(r: Node, assignment: dict[int, tuple[int, ...]]) -> Node:
    mapping = {h: Const(h.ty, tuple(assignment[h.index])) for h in holes(r)}
    return substitute(r, mapping)


# ------------------------------------------------------------------ checking

def result_type(op: str, args, ty: Optional[Type], cond=None, mask=None, callee=None) -> Type:
    """Compute and check the result type of an instruction node."""
    arg_tys = [a.ty for a in args]

    def need(n):
        if len(args) != n:
            raise RewriteError(f"{op or callee} takes {n} operands, got {len(args)}")

    if ty is None and op in ir.BINARY_OPS + ir.UNARY_OPS and args:
        ty = arg_tys[0]
    if op in ir.BINARY_OPS:
        need(2)
        if not (arg_tys[0] == arg_tys[1] == ty):
            raise RewriteError(f"{op}: operand types {arg_tys[0]}, {arg_tys[1]} do not match {ty}")
        return ty
    if op in ir.UNARY_OPS:
        need(1)
        if arg_tys[0] != ty:
            raise RewriteError(f"{op}: operand type {arg_tys[0]} does not match {ty}")
        _check_unary_width(op, ty)
        return ty
    if op in ("zext", "sext", "trunc"):
        need(1)
        src = arg_tys[0]
        if src.lanes != ty.lanes or src.vector != ty.vector:
            raise RewriteError(f"{op}: lane count changes from {src} to {ty}")
        if op == "trunc" and not ty.width < src.width:
            raise RewriteError(f"trunc must narrow ({src} to {ty})")
        if op != "trunc" and not ty.width > src.width:
            raise RewriteError(f"{op} must widen ({src} to {ty})")
        return ty
    if op == "bitcast":
        need(1)
        if arg_tys[0].bits != ty.bits:
            raise RewriteError(f"bitcast between different sizes ({arg_tys[0]} to {ty})")
        return ty
    if op == "icmp":
        need(2)
        if cond not in ir.ICMP_CONDS:
            raise RewriteError(f"unknown icmp condition {cond!r}")
        if arg_tys[0] != arg_tys[1]:
            raise RewriteError("icmp operands differ in type")
        return shape(arg_tys[0].lanes, 1)
    if op == "extractelement":
        need(2)
        if not arg_tys[0].vector or arg_tys[1] != int_type(32):
            raise RewriteError("extractelement takes a vector and an i32 index")
        return arg_tys[0].element()
    if op == "insertelement":
        need(3)
        v, e, i = arg_tys
        if not v.vector or e != v.element() or i != int_type(32):
            raise RewriteError("insertelement takes a vector, an element and an i32 index")
        return v
    if op == "shufflevector":
        need(2)
        if not arg_tys[0].vector or arg_tys[0] != arg_tys[1]:
            raise RewriteError("shufflevector operands must be equal vector types")
        if mask is None or len(mask) < 2:
            raise RewriteError("shufflevector mask needs at least two lanes")
        if any(not 0 <= m < 2 * arg_tys[0].lanes for m in mask):
            raise RewriteError("shufflevector mask index out of range")
        try:
            return vec_type(len(mask), arg_tys[0].width)
        except TypeError_ as e:
            raise RewriteError(str(e))
    if op == "call":
        try:
            desc = lookup(callee)
        except UnknownIntrinsic:
            raise RewriteError(f"unknown intrinsic {callee!r}")
        want = desc.operand_types()
        need(len(want))
        for k, (got, exp) in enumerate(zip(arg_tys, want)):
            if got != exp:
                raise RewriteError(f"{callee}: operand {k} has type {got}, expected {exp}")
        if desc.is_shift and not isinstance(args[1], (Const, Hole)):
            raise RewriteError(f"{callee}: shift amount must be an immediate")
        return desc.result_type
    raise RewriteError(f"unknown opcode {op!r}")


def _check_unary_width(op, ty):
    if op == "bswap" and ty.width % 16 != 0:
        raise RewriteError(f"bswap needs a lane width that is a multiple of 16, not {ty}")


def make(op: str, args, ty: Optional[Type] = None, cond=None, mask=None, callee=None) -> Op:
    """Build a checked instruction node, inferring the type where it is implied."""
    args = tuple(args)
    rty = result_type(op, args, ty, cond, mask, callee)
    return Op(op, args, rty, cond, tuple(mask) if mask is not None else None, callee)


def check(r: Node, val_types: Optional[dict[str, Type]] = None) -> None:
    """Re-check every node; ``val_types`` pins the types of ``val`` leaves."""
    for n in postorder(r):
        if isinstance(n, Val):
            if val_types is not None:
                if n.name not in val_types:
                    raise RewriteError(f"val %{n.name} is not a value of the slice")
                if val_types[n.name] != n.ty:
                    raise RewriteError(f"val %{n.name} has type {val_types[n.name]}, not {n.ty}")
        elif isinstance(n, Const):
            if len(n.lanes) != n.ty.lanes or any(not 0 <= v <= n.ty.mask for v in n.lanes):
                raise RewriteError(f"malformed constant {n}")
        elif isinstance(n, Op):
            rty = result_type(n.op, n.args, n.ty, n.cond, n.mask, n.callee)
            if rty != n.ty:
                raise RewriteError(f"{n.op}: result type {n.ty} should be {rty}")


# ------------------------------------------------------------------ printing

def _lanes_text(lanes) -> str:
    if len(set(lanes)) == 1:
        return str(lanes[0])
    return "<" + ", ".join(str(v) for v in lanes) + ">"


def print_rewrite(r: Node) -> str:
    if isinstance(r, Val):
        return f"(val {r.ty} %{r.name})"
    if isinstance(r, Const):
        return f"(const {r.ty} {_lanes_text(r.lanes)})"
    if isinstance(r, Hole):
        return f"(hole {r.ty})"
    a = [print_rewrite(x) for x in r.args]
    if r.op in ir.BINARY_OPS:
        return f"({r.op} {a[0]}, {a[1]}, {r.ty})"
    if r.op in ir.UNARY_OPS or r.op in ir.CONV_OPS:
        return f"({r.op} {a[0]}, {r.ty})"
    if r.op == "icmp":
        return f"(icmp {r.cond} {a[0]} {a[1]})"
    if r.op == "shufflevector":
        mty = vec_type(len(r.mask), 32)
        return f"(shufflevector {a[0]}, {a[1]}, (const {mty} {_lanes_text_full(r.mask)}))"
    if r.op == "call":
        return f"({r.callee} {', '.join(a)})"
    return f"({r.op} {', '.join(a)})"


def _lanes_text_full(lanes) -> str:
    return "<" + ", ".join(str(v) for v in lanes) + ">"


# ------------------------------------------------------------------- parsing

_SX_TOKEN = re.compile(r"\s+|;[^\n]*|(?P<tok>%[\w.]+|-?\d+|[A-Za-z_][\w.]*|[(),<>])")


def _sx_tokens(text: str) -> list[str]:
    out, pos = [], 0
    while pos < len(text):
        m = _SX_TOKEN.match(text, pos)
        if not m:
            raise RewriteError(f"unexpected character {text[pos]!r} at offset {pos}")
        if m.group("tok"):
            out.append(m.group("tok"))
        pos = m.end()
    return out


class _SX:
    def __init__(self, toks):
        self.toks, self.i = toks, 0
        self.hole_count = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self):
        if self.i >= len(self.toks):
            raise RewriteError("unexpected end of rewrite")
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, t):
        got = self.next()
        if got != t:
            raise RewriteError(f"expected {t!r}, found {got!r}")

    def comma(self):
        if self.peek() == ",":
            self.i += 1

    def type(self) -> Type:
        t = self.next()
        try:
            if t == "<":
                lanes = int(self.next())
                self.expect("x")
                elem = self.next()
                self.expect(">")
                if not re.fullmatch(r"i\d+", elem):
                    raise RewriteError(f"bad element type {elem!r}")
                return vec_type(lanes, int(elem[1:]))
            if re.fullmatch(r"i\d+", t):
                return int_type(int(t[1:]))
        except (TypeError_, ValueError) as e:
            raise RewriteError(str(e))
        raise RewriteError(f"expected a type, found {t!r}")

    def literal(self, ty: Type) -> tuple[int, ...]:
        if self.peek() == "<":
            self.next()
            lanes = []
            while True:
                t = self.next()
                if re.fullmatch(r"i\d+", t):
                    t = self.next()
                lanes.append(self._int(t))
                if self.peek() == ">":
                    self.next()
                    break
                self.expect(",")
            if len(lanes) != ty.lanes:
                raise RewriteError(f"literal has {len(lanes)} lanes, {ty} has {ty.lanes}")
            return tuple(v & ty.mask for v in lanes)
        return (self._int(self.next()) & ty.mask,) * ty.lanes

    @staticmethod
    def _int(t):
        if not re.fullmatch(r"-?\d+", t):
            raise RewriteError(f"expected an integer, found {t!r}")
        return int(t)

    def node(self) -> Node:
        self.expect("(")
        head = self.next()
        if head == "val":
            ty = self.type()
            name = self.next()
            if not name.startswith("%"):
                raise RewriteError(f"expected a value name, found {name!r}")
            self.expect(")")
            return Val(ty, name[1:])
        if head == "const":
            ty = self.type()
            lanes = self.literal(ty)
            self.expect(")")
            return Const(ty, lanes)
        if head == "hole":
            ty = self.type()
            self.expect(")")
            h = Hole(ty, self.hole_count)
            self.hole_count += 1
            return h
        if head == "icmp":
            cond = self.next()
            a = self.node()
            self.comma()
            b = self.node()
            self.expect(")")
            return make("icmp", (a, b), cond=cond)
        if head == "shufflevector":
            a = self.node()
            self.comma()
            b = self.node()
            self.comma()
            m = self.node()
            self.expect(")")
            if not isinstance(m, Const):
                raise RewriteError("shufflevector mask must be a constant")
            return make("shufflevector", (a, b), mask=m.lanes)
        if head in ir.BINARY_OPS or head in ir.UNARY_OPS or head in ir.CONV_OPS:
            args = [self.node()]
            if head in ir.BINARY_OPS:
                self.comma()
                args.append(self.node())
            ty = None
            if head in ir.CONV_OPS or self.peek() != ")":
                # The trailing result type may be omitted where operands fix it.
                self.comma()
                ty = self.type()
            self.expect(")")
            return make(head, args, ty)
        if head in ("insertelement", "extractelement"):
            args = self._operands()
            return make(head, args)
        try:
            lookup(head)
        except UnknownIntrinsic:
            raise RewriteError(f"unknown operation {head!r}")
        return make("call", self._operands(), callee=head)

    def _operands(self):
        args = [self.node()]
        while self.peek() != ")":
            self.comma()
            args.append(self.node())
        self.next()
        return args


def parse_rewrite(text: str) -> Node:
    p = _SX(_sx_tokens(text))
    r = p.node()
    if p.peek() is not None:
        raise RewriteError(f"trailing input {p.peek()!r}")
    return r


def value_nodes(f: ir.Function) -> dict[str, Node]:
    """Every value of a straight-line function as a tree over its parameters."""
    if len(f.blocks) != 1:
        raise RewriteError("only straight-line functions convert to rewrites")
    types = f.param_types()
    built: dict[str, Node] = {p: Val(t, p) for p, t in f.params if t.is_int}
    for inst in f.entry.insts:
        types[inst.dest] = inst.ty
        if inst.op in ("load", "store", "gep", "phi"):
            raise RewriteError(f"{inst.op} has no rewrite form")
        args = []
        for a, t in zip(inst.args, ir.operand_types(inst, types)):
            if isinstance(a, ir.Ref):
                args.append(built[a.name])
            else:
                args.append(Const(t, a.lanes))
        built[inst.dest] = make(inst.op, args, inst.ty, inst.cond, inst.mask, inst.callee)
    return built


def rewrite_of_function(f: ir.Function) -> Node:
    """The whole (single-block) function as a rewrite rooted at its return."""
    built = value_nodes(f)
    ret = f.entry.term.args[0]
    if isinstance(ret, ir.Ref):
        return built[ret.name]
    return Const(f.ret_ty, ret.lanes)
