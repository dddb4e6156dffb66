"""Textual form of functions: tokenizer, parser and canonical printer.

::

    func @f(%x: i32, %v: <4 x i8>) -> i32 {
    entry:
      %0 = shl %x, 3 : i32
      %1 = zext %x to i64
      %2 = icmp eq %v, 46 : <4 x i8>
      %3 = shufflevector %v, %v, <i32 3, i32 2, i32 1, i32 0> : <4 x i8>
      %4 = call <4 x i8> @pavg.v4i8(%v, %v)
      br %c, then, else
    ...
    }
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from . import ir
from .intrinsics import UnknownIntrinsic, lookup
from .ir import Block, Function, Instruction, Lit, Ref, Terminator
from .types import PTR, Type, TypeError_, int_type, shape, vec_type


class ParseError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}" if line else msg)
        self.line, self.col = line, col


class ValidationError(ValueError):
    def __init__(self, diagnostics):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


_TOKEN = re.compile(
    r"\s+|;[^\n]*|(?P<tok>->|%[\w.]+|@[\w.]+|-?\d+|[A-Za-z_][\w.]*|[(){}\[\]<>,:=])"
)


@dataclass
class Tok:
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        if m.group("tok"):
            toks.append(Tok(m.group("tok"), line, pos - line_start + 1))
        chunk = m.group(0)
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    return toks


class _Stream:
    def __init__(self, toks: list[Tok]):
        self.toks = toks
        self.i = 0

    def peek(self, k: int = 0) -> Optional[str]:
        j = self.i + k
        return self.toks[j].text if j < len(self.toks) else None

    def where(self):
        t = self.toks[min(self.i, len(self.toks) - 1)] if self.toks else Tok("", 1, 1)
        return t.line, t.col

    def error(self, msg):
        raise ParseError(msg, *self.where())

    def next(self) -> str:
        if self.i >= len(self.toks):
            self.error("unexpected end of input")
        t = self.toks[self.i].text
        self.i += 1
        return t

    def expect(self, text: str) -> str:
        t = self.peek()
        if t != text:
            self.error(f"expected {text!r}, found {t!r}")
        return self.next()

    def accept(self, text: str) -> bool:
        if self.peek() == text:
            self.i += 1
            return True
        return False

    def done(self) -> bool:
        return self.i >= len(self.toks)


def parse_type_tokens(s: _Stream) -> Type:
    t = s.next()
    try:
        if t == "ptr":
            return PTR
        if t == "<":
            lanes = int(s.next())
            s.expect("x")
            elem = s.next()
            s.expect(">")
            if not re.fullmatch(r"i\d+", elem):
                s.error(f"bad element type {elem!r}")
            return vec_type(lanes, int(elem[1:]))
        if re.fullmatch(r"i\d+", t):
            return int_type(int(t[1:]))
    except (TypeError_, ValueError) as e:
        s.error(str(e))
    s.error(f"expected a type, found {t!r}")


def _int(s: _Stream) -> int:
    t = s.next()
    if not re.fullmatch(r"-?\d+", t):
        s.error(f"expected an integer, found {t!r}")
    return int(t)


def parse_lane_list(s: _Stream) -> list[int]:
    """``<a, b, ...>`` where each lane may carry an ``iN`` prefix."""
    s.expect("<")
    lanes = []
    while True:
        if s.peek() and re.fullmatch(r"i\d+", s.peek()):
            s.next()
        lanes.append(_int(s))
        if s.accept(">"):
            return lanes
        s.expect(",")


class _RawLit:
    """A literal whose type is only known from its use site."""

    def __init__(self, lanes: list[int], where):
        self.lanes = lanes
        self.where = where

    def resolve(self, ty: Type) -> Lit:
        if ty is None:
            raise ParseError("literal not allowed here", *self.where)
        if len(self.lanes) == 1:
            return Lit.of(self.lanes[0], ty)
        if len(self.lanes) != ty.lanes:
            raise ParseError(f"literal has {len(self.lanes)} lanes, {ty} expected", *self.where)
        return Lit(tuple(v & ty.mask for v in self.lanes))


def _operand(s: _Stream):
    t = s.peek()
    if t is None:
        s.error("expected an operand")
    if t.startswith("%"):
        s.next()
        return Ref(t[1:])
    where = s.where()
    if t == "<":
        return _RawLit(parse_lane_list(s), where)
    return _RawLit([_int(s)], where)


def _operands(s: _Stream, n: int):
    out = [_operand(s)]
    for _ in range(n - 1):
        s.expect(",")
        out.append(_operand(s))
    return out


def _label(s: _Stream) -> str:
    t = s.next()
    if not re.fullmatch(r"[A-Za-z_][\w.]*", t):
        s.error(f"expected a block label, found {t!r}")
    return t


def _parse_inst(s: _Stream, dest: Optional[str]) -> Instruction:
    op = s.next()
    if op in ir.BINARY_OPS or op in ir.UNARY_OPS:
        args = _operands(s, 2 if op in ir.BINARY_OPS else 1)
        s.expect(":")
        ty = parse_type_tokens(s)
        return Instruction(dest, op, tuple(a.resolve(ty) if isinstance(a, _RawLit) else a for a in args), ty)
    if op in ir.CONV_OPS:
        a = _operand(s)
        if isinstance(a, _RawLit):
            s.error("conversion operands must be values")
        s.expect("to")
        ty = parse_type_tokens(s)
        return Instruction(dest, op, (a,), ty)
    if op == "icmp":
        cond = s.next()
        if cond not in ir.ICMP_CONDS:
            s.error(f"unknown icmp condition {cond!r}")
        args = _operands(s, 2)
        s.expect(":")
        argty = parse_type_tokens(s)
        rty = shape(argty.lanes, 1)
        return Instruction(dest, op, tuple(a.resolve(argty) if isinstance(a, _RawLit) else a for a in args),
                           rty, argty=argty, cond=cond)
    if op == "extractelement":
        v, idx = _operands(s, 2)
        s.expect(":")
        argty = parse_type_tokens(s)
        if isinstance(v, _RawLit):
            v = v.resolve(argty)
        if isinstance(idx, _RawLit):
            idx = idx.resolve(int_type(32))
        return Instruction(dest, op, (v, idx), argty.element(), argty=argty)
    if op == "insertelement":
        v, e, idx = _operands(s, 3)
        s.expect(":")
        ty = parse_type_tokens(s)
        args = [v.resolve(ty) if isinstance(v, _RawLit) else v,
                e.resolve(ty.element()) if isinstance(e, _RawLit) else e,
                idx.resolve(int_type(32)) if isinstance(idx, _RawLit) else idx]
        return Instruction(dest, op, tuple(args), ty, argty=ty)
    if op == "shufflevector":
        a = _operand(s)
        s.expect(",")
        b = _operand(s)
        s.expect(",")
        mask = parse_lane_list(s)
        s.expect(":")
        argty = parse_type_tokens(s)
        args = tuple(x.resolve(argty) if isinstance(x, _RawLit) else x for x in (a, b))
        try:
            rty = vec_type(len(mask), argty.width)
        except TypeError_ as e:
            s.error(str(e))
        return Instruction(dest, op, args, rty, argty=argty, mask=tuple(mask))
    if op == "phi":
        ty = parse_type_tokens(s)
        args, labels = [], []
        while True:
            s.expect("[")
            a = _operand(s)
            s.expect(",")
            labels.append(_label(s))
            s.expect("]")
            args.append(a.resolve(ty) if isinstance(a, _RawLit) else a)
            if not s.accept(","):
                break
        return Instruction(dest, op, tuple(args), ty, incoming=tuple(labels))
    if op == "call":
        ty = parse_type_tokens(s)
        callee = s.next()
        if not callee.startswith("@"):
            s.error("expected an intrinsic name")
        callee = callee[1:]
        try:
            desc = lookup(callee)
        except UnknownIntrinsic:
            s.error(f"unknown intrinsic {callee!r}")
        s.expect("(")
        raw = _operands(s, desc.arity)
        s.expect(")")
        args = tuple(a.resolve(t) if isinstance(a, _RawLit) else a for a, t in zip(raw, desc.operand_types()))
        return Instruction(dest, op, args, ty, callee=callee)
    if op == "load":
        ty = parse_type_tokens(s)
        s.expect(",")
        p = _operand(s)
        if not isinstance(p, Ref):
            s.error("load needs a pointer value")
        return Instruction(dest, op, (p,), ty)
    if op == "gep":
        p = _operand(s)
        s.expect(",")
        off = _int(s)
        if not isinstance(p, Ref):
            s.error("gep needs a pointer value")
        return Instruction(dest, op, (p, Lit((off,))), PTR)
    s.error(f"unknown opcode {op!r}")


def parse_function(text: str, validate_result: bool = True) -> Function:
    """Parse (and by default validate) one function."""
    s = _Stream(tokenize(text))
    f = _parse_function(s)
    if not s.done():
        s.error(f"trailing input {s.peek()!r}")
    if validate_result:
        from .validate import validate

        diags = validate(f)
        if diags:
            raise ValidationError(diags)
    return f


def parse_functions(text: str) -> list[Function]:
    s = _Stream(tokenize(text))
    out = []
    while not s.done():
        out.append(_parse_function(s))
    from .validate import validate

    for f in out:
        diags = validate(f)
        if diags:
            raise ValidationError(diags)
    return out


def _parse_function(s: _Stream) -> Function:
    s.expect("func")
    name = s.next()
    if not name.startswith("@"):
        s.error("expected @name")
    s.expect("(")
    params = []
    if not s.accept(")"):
        while True:
            p = s.next()
            if not p.startswith("%"):
                s.error("expected a parameter name")
            s.expect(":")
            params.append((p[1:], parse_type_tokens(s)))
            if s.accept(")"):
                break
            s.expect(",")
    s.expect("->")
    ret_ty = parse_type_tokens(s)
    s.expect("{")
    blocks = []
    label = None
    insts: list = []
    pending_stores = []
    while not s.accept("}"):
        t = s.peek()
        if t is None:
            s.error("unterminated function body")
        if s.peek(1) == ":" and not t.startswith("%") and t not in ("ret", "br", "store"):
            if label is not None and insts:
                s.error(f"block {label!r} has no terminator")
            label = s.next()
            s.next()
            continue
        if label is None:
            if blocks:
                s.error("expected a block label")
            label = "entry"
        if t in ("ret", "br"):
            s.next()
            if t == "ret":
                a = _operand(s)
                term = Terminator("ret", (a.resolve(ret_ty) if isinstance(a, _RawLit) else a,))
            elif s.peek() and (s.peek().startswith("%") or re.fullmatch(r"-?\d+", s.peek())):
                c = _operand(s)
                s.expect(",")
                t1 = _label(s)
                s.expect(",")
                t2 = _label(s)
                c = c.resolve(int_type(1)) if isinstance(c, _RawLit) else c
                term = Terminator("cbr", (c,), (t1, t2))
            else:
                term = Terminator("br", (), (_label(s),))
            blocks.append(Block(label, tuple(insts), term))
            label, insts = None, []
            continue
        if t == "store":
            s.next()
            v = _operand(s)
            s.expect(",")
            p = _operand(s)
            if not isinstance(v, Ref) or not isinstance(p, Ref):
                s.error("store takes a value and a pointer")
            ty = None
            if s.accept(":"):
                ty = parse_type_tokens(s)
            inst = Instruction(None, "store", (v, p), ty or PTR)
            pending_stores.append((len(blocks), len(insts), ty is None, s.where()))
            insts.append(inst)
            continue
        if not t.startswith("%"):
            s.error(f"expected an instruction, found {t!r}")
        dest = s.next()[1:]
        s.expect("=")
        insts.append(_parse_inst(s, dest))
    if label is not None or insts:
        s.error("last block has no terminator")
    if not blocks:
        s.error("function has no blocks")
    f = Function(name[1:], tuple(params), ret_ty, tuple(blocks))
    if pending_stores:
        f = _type_stores(f, pending_stores)
    return f


def _type_stores(f: Function, pending) -> Function:
    types = dict(f.params)
    for _, i in f.instructions():
        if i.dest is not None:
            types[i.dest] = i.ty
    blocks = list(f.blocks)
    for bi, ii, infer, where in pending:
        if not infer:
            continue
        b = blocks[bi]
        inst = b.insts[ii]
        vname = inst.args[0].name
        if vname not in types:
            raise ParseError(f"store of undefined value %{vname}", *where)
        new = Instruction(None, "store", inst.args, types[vname])
        insts = list(b.insts)
        insts[ii] = new
        blocks[bi] = Block(b.label, tuple(insts), b.term)
    return Function(f.name, f.params, f.ret_ty, tuple(blocks))


# ------------------------------------------------------------------- printing

def _lit_lanes(lit: Lit) -> str:
    return str(lit)


def format_operand(a) -> str:
    return str(a)


def format_instruction(i: Instruction) -> str:
    op = i.op
    lhs = f"%{i.dest} = " if i.dest is not None else ""
    a = [format_operand(x) for x in i.args]
    if op in ir.BINARY_OPS or op in ir.UNARY_OPS:
        return f"{lhs}{op} {', '.join(a)} : {i.ty}"
    if op in ir.CONV_OPS:
        return f"{lhs}{op} {a[0]} to {i.ty}"
    if op == "icmp":
        return f"{lhs}icmp {i.cond} {a[0]}, {a[1]} : {i.argty}"
    if op in ("extractelement", "insertelement"):
        return f"{lhs}{op} {', '.join(a)} : {i.argty}"
    if op == "shufflevector":
        mask = "<" + ", ".join(f"i32 {m}" for m in i.mask) + ">"
        return f"{lhs}shufflevector {a[0]}, {a[1]}, {mask} : {i.argty}"
    if op == "phi":
        arms = ", ".join(f"[{x}, {lab}]" for x, lab in zip(a, i.incoming))
        return f"{lhs}phi {i.ty} {arms}"
    if op == "call":
        return f"{lhs}call {i.ty} @{i.callee}({', '.join(a)})"
    if op == "load":
        return f"{lhs}load {i.ty}, {a[0]}"
    if op == "store":
        return f"store {a[0]}, {a[1]}"
    if op == "gep":
        return f"{lhs}gep {a[0]}, {i.args[1].lanes[0]}"
    raise ValueError(op)


def format_terminator(t: Terminator) -> str:
    if t.kind == "ret":
        return f"ret {format_operand(t.args[0])}"
    if t.kind == "br":
        return f"br {t.targets[0]}"
    return f"br {format_operand(t.args[0])}, {t.targets[0]}, {t.targets[1]}"


def print_function(f: Function) -> str:
    params = ", ".join(f"%{p}: {t}" for p, t in f.params)
    lines = [f"func @{f.name}({params}) -> {f.ret_ty} {{"]
    single = len(f.blocks) == 1 and f.blocks[0].label == "entry"
    for b in f.blocks:
        if not single:
            lines.append(f"{b.label}:")
        for i in b.insts:
            lines.append("  " + format_instruction(i))
        lines.append("  " + format_terminator(b.term))
    lines.append("}")
    return "\n".join(lines) + "\n"
