"""A deliberately naive, pure-Python evaluator.

It shares no code with the numpy kernels: every operation is written from
its mathematical definition over Python integers (big-integer widened
arithmetic, explicit sign handling).  It is the oracle for the differential
tester and re-checks exhaustive proofs.
"""

from __future__ import annotations

from typing import Optional

from . import intrinsics, ir
from .intrinsics import IntrinsicDescriptor
from .ir import Function, Ref
from .rewrite import Const, Hole, Node, Op, Val, postorder
from .types import Type

Lanes = list  # list[Optional[int]], None is poison


class RefTrap(Exception):
    pass


def _s(v: int, w: int) -> int:
    return v - (1 << w) if v >= 1 << (w - 1) else v


def _u(v: int, w: int) -> int:
    return v % (1 << w)


def _binary(op: str, x: Optional[int], y: Optional[int], w: int) -> Optional[int]:
    if op in ("udiv", "sdiv"):
        if y is None or y == 0:
            raise RefTrap("division by zero or by poison")
        if op == "sdiv" and x is not None and _s(x, w) == -(1 << (w - 1)) and _s(y, w) == -1:
            raise RefTrap("signed division overflow")
    if x is None or y is None:
        return None
    if op == "add":
        return _u(x + y, w)
    if op == "sub":
        return _u(x - y, w)
    if op == "mul":
        return _u(x * y, w)
    if op == "and":
        return x & y
    if op == "or":
        return x | y
    if op == "xor":
        return x ^ y
    if op in ("shl", "lshr", "ashr"):
        if y >= w:
            return None
        if op == "shl":
            return _u(x * 2 ** y, w)
        if op == "lshr":
            return x // 2 ** y
        return _u(_s(x, w) // 2 ** y, w)
    if op == "udiv":
        return x // y
    if op == "sdiv":
        a, b = _s(x, w), _s(y, w)
        q = abs(a) // abs(b)
        return _u(q if (a < 0) == (b < 0) else -q, w)
    raise ValueError(op)


def _bits_of(x: int, w: int) -> list[int]:
    return [(x >> i) & 1 for i in range(w)]


def _unary(op: str, x: Optional[int], w: int) -> Optional[int]:
    if x is None:
        return None
    bits = _bits_of(x, w)
    if op == "ctpop":
        return sum(bits)
    if op == "ctlz":
        n = 0
        for b in reversed(bits):
            if b:
                break
            n += 1
        return n
    if op == "cttz":
        n = 0
        for b in bits:
            if b:
                break
            n += 1
        return n
    if op == "bswap":
        data = x.to_bytes(w // 8, "little")
        return int.from_bytes(data, "big")
    if op == "bitreverse":
        return sum(b << (w - 1 - i) for i, b in enumerate(bits))
    raise ValueError(op)


def _icmp(cond: str, x, y, w):
    if x is None or y is None:
        return None
    if cond in ("slt", "sle"):
        x, y = _s(x, w), _s(y, w)
    return int({"eq": x == y, "ne": x != y, "ult": x < y, "ule": x <= y, "slt": x < y, "sle": x <= y}[cond])


def _bitcast(lanes: Lanes, src: Type, dst: Type) -> Lanes:
    # Concatenate as a big integer, lane 0 in the low bits.
    total, poison_bits = 0, set()
    for k, v in enumerate(lanes):
        if v is None:
            poison_bits.update(range(k * src.width, (k + 1) * src.width))
        else:
            total |= v << (k * src.width)
    out = []
    for k in range(dst.lanes):
        lo, hi = k * dst.width, (k + 1) * dst.width
        if any(b in poison_bits for b in range(lo, hi)):
            out.append(None)
        else:
            out.append((total >> lo) % (1 << dst.width))
    return out


# ------------------------------------------------------------- intrinsics

def _masked(desc, out, passthrough, mask):
    if not desc.masked:
        return out
    res = []
    for i, v in enumerate(out):
        m = mask[i]
        if m is None:
            res.append(None)
        elif m == 1:
            res.append(v)
        else:
            res.append(passthrough[i])
    return res


def oracle_eval(desc: IntrinsicDescriptor, operands: list[Lanes]) -> Lanes:
    """Independent reference semantics of one intrinsic call."""
    w = desc.width
    extra = operands[2:] if desc.masked else [None, None]
    if desc.family == "pavg":
        a, b = operands[0], operands[1]
        out = []
        for x, y in zip(a, b):
            # Widened arithmetic: the sum may need width + 1 bits.
            out.append(None if x is None or y is None else (x + y + 1) // 2)
        return _masked(desc, out, *extra)
    if desc.family == "pmadd_wd":
        a, b = operands[0], operands[1]
        h = w // 2
        out = []
        for i in range(desc.lanes):
            lanes = (a[2 * i], b[2 * i], a[2 * i + 1], b[2 * i + 1])
            if any(v is None for v in lanes):
                out.append(None)
                continue
            acc = _s(lanes[0], h) * _s(lanes[1], h) + _s(lanes[2], h) * _s(lanes[3], h)
            out.append(acc % (1 << w))
        return _masked(desc, out, *extra)
    x, imm = operands[0], operands[1][0]
    out = []
    for v in x:
        if v is None or imm is None:
            out.append(None)
        elif desc.family == "pslli":
            # Any amount of at least the width empties the lane.
            out.append((v * 2 ** min(imm, w)) % (1 << w))
        elif desc.family == "psrli":
            out.append(v // 2 ** min(imm, w))
        else:
            out.append(_u(_s(v, w) // 2 ** min(imm, w), w))
    return _masked(desc, out, *extra)


# -------------------------------------------------------------- evaluation

def _apply(op, args: list[Lanes], arg_tys: list[Type], ty: Type, cond=None, mask=None, callee=None) -> Lanes:
    if op in ir.BINARY_OPS:
        return [_binary(op, x, y, ty.width) for x, y in zip(args[0], args[1])]
    if op in ir.UNARY_OPS:
        return [_unary(op, x, ty.width) for x in args[0]]
    if op == "zext":
        return list(args[0])
    if op == "sext":
        return [None if v is None else _u(_s(v, arg_tys[0].width), ty.width) for v in args[0]]
    if op == "trunc":
        return [None if v is None else v % (1 << ty.width) for v in args[0]]
    if op == "bitcast":
        return _bitcast(args[0], arg_tys[0], ty)
    if op == "icmp":
        return [_icmp(cond, x, y, arg_tys[0].width) for x, y in zip(args[0], args[1])]
    if op == "extractelement":
        i = args[1][0]
        if i is None or i >= arg_tys[0].lanes:
            return [None]
        return [args[0][i]]
    if op == "insertelement":
        i = args[2][0]
        if i is None or i >= ty.lanes:
            return [None] * ty.lanes
        out = list(args[0])
        out[i] = args[1][0]
        return out
    if op == "shufflevector":
        both = list(args[0]) + list(args[1])
        return [both[m] for m in mask]
    if op == "call":
        return oracle_eval(intrinsics.lookup(callee), args)
    raise ValueError(op)


def eval_rewrite(r: Node, bindings: dict[str, Lanes], types: Optional[dict[str, Type]] = None) -> Lanes:
    memo = {}
    for n in postorder(r):
        if isinstance(n, Val):
            v = bindings[n.name]
            if types is not None and types[n.name] != n.ty:
                v = _bitcast(v, types[n.name], n.ty)
            memo[n] = list(v)
        elif isinstance(n, Const):
            memo[n] = list(n.lanes)
        elif isinstance(n, Hole):
            raise ValueError("rewrite still has holes")
        else:
            memo[n] = _apply(n.op, [memo[a] for a in n.args], [a.ty for a in n.args], n.ty, n.cond, n.mask, n.callee)
    return memo[r]


def eval_function(f: Function, args: dict[str, Lanes], memory: Optional[dict] = None,
                  fresh=None, step_limit: int = 10_000) -> Lanes:
    """Walk the CFG one instruction at a time.  Raises RefTrap on immediate UB."""
    types = f.param_types()
    for _, inst in f.instructions():
        if inst.dest is not None:
            types[inst.dest] = inst.ty
    env: dict[str, Lanes] = {}
    ptrs: dict[str, tuple] = {}
    for p, t in f.params:
        if t.pointer:
            ptrs[p] = (p, 0)
        else:
            env[p] = list(args[p])
    mem = dict(memory or {})

    def get(a, t):
        if isinstance(a, Ref):
            return env[a.name]
        return list(a.lanes)

    block, prev, steps = f.entry, None, 0
    while True:
        steps += 1
        if steps > step_limit:
            raise RefTrap("step limit")
        phis = [(i.dest, get(i.args[i.incoming.index(prev)], i.ty)) for i in block.insts if i.op == "phi"]
        for d, v in phis:
            env[d] = list(v)
        for inst in block.insts[len(phis):]:
            if inst.op == "gep":
                b, o = ptrs[inst.args[0].name]
                ptrs[inst.dest] = (b, o + inst.args[1].lanes[0])
            elif inst.op == "load":
                b, o = ptrs[inst.args[0].name]
                key = (b, o, inst.ty)
                if key not in mem:
                    if fresh is None:
                        raise KeyError(f"load from unbound cell {key}")
                    mem[key] = fresh(key)
                env[inst.dest] = list(mem[key])
            elif inst.op == "store":
                b, o = ptrs[inst.args[1].name]
                mem[(b, o, inst.ty)] = list(get(inst.args[0], inst.ty))
            else:
                tys = ir.operand_types(inst, types)
                vals = [get(a, t) for a, t in zip(inst.args, tys)]
                arg_tys = [types[a.name] if isinstance(a, Ref) else t for a, t in zip(inst.args, tys)]
                env[inst.dest] = _apply(inst.op, vals, arg_tys, inst.ty, inst.cond, inst.mask, inst.callee)
        t = block.term
        if t.kind == "ret":
            return get(t.args[0], f.ret_ty)
        if t.kind == "br":
            prev, block = block.label, f.block(t.targets[0])
            continue
        c = get(t.args[0], None)[0]
        if c is None:
            raise RefTrap("branch on poison")
        prev, block = block.label, f.block(t.targets[0] if c == 1 else t.targets[1])
