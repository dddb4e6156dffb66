"""Random well-formed functions for property tests.

Programs mix straight-line integer and vector code with diamonds (a
conditional branch whose arms meet at phis), counted loops (an induction
phi, an accumulator phi and a back edge) and memory traffic through a
pointer parameter.  Every generated function validates.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from . import ir
from .ir import Block, Function, Instruction, Lit, Ref, Terminator
from .types import PTR, Type, int_type, vec_type

SCALARS = (int_type(1), int_type(4), int_type(8), int_type(16), int_type(32))
VECTORS = (vec_type(2, 8), vec_type(4, 8), vec_type(2, 16), vec_type(4, 4))


@dataclass(frozen=True)
class GenConfig:
    params: int = 3
    straight: int = 4  # instructions per straight-line chunk
    regions: int = 3
    p_diamond: float = 0.35
    p_loop: float = 0.25
    p_memory: float = 0.3
    p_vector: float = 0.35
    p_division: float = 0.03


class _Builder:
    def __init__(self, rng: random.Random, cfg: GenConfig):
        self.rng = rng
        self.cfg = cfg
        self.blocks: list[Block] = []
        self.label = "entry"
        self.insts: list[Instruction] = []
        self.n = 0
        self.nblocks = 0

    def name(self) -> str:
        self.n += 1
        return f"v{self.n}"

    def new_label(self, hint: str) -> str:
        self.nblocks += 1
        return f"{hint}{self.nblocks}"

    def close(self, term: Terminator, nxt: Optional[str]):
        self.blocks.append(Block(self.label, tuple(self.insts), term))
        self.insts = []
        if nxt is not None:
            self.label = nxt

    def emit(self, inst: Instruction) -> tuple[str, Type]:
        self.insts.append(inst)
        return inst.dest, inst.ty


def _const(rng: random.Random, ty: Type) -> Lit:
    pool = [0, 1, 2, 3, ty.mask, 1 << (ty.width - 1), rng.randrange(1 << ty.width)]
    if rng.random() < 0.5:
        return Lit((rng.choice(pool) & ty.mask,) * ty.lanes)
    return Lit(tuple(rng.choice(pool) & ty.mask for _ in range(ty.lanes)))


def _of_type(avail, ty):
    return [n for n, t in avail if t == ty]


def _instruction(b: _Builder, avail: list) -> Instruction:
    rng = b.rng
    name, ty = rng.choice(avail)
    a = Ref(name)
    dest = b.name()
    r = rng.random()
    same = _of_type(avail, ty)
    other = Ref(rng.choice(same)) if same and rng.random() < 0.7 else _const(rng, ty)
    if r < 0.4:
        ops = [o for o in ir.BINARY_OPS if o not in ("udiv", "sdiv")]
        if rng.random() < b.cfg.p_division:
            ops = ["udiv", "sdiv"]
        op = rng.choice(ops)
        if op in ("shl", "lshr", "ashr") and rng.random() < 0.8:
            other = Lit((rng.randrange(ty.width),) * ty.lanes)
        return Instruction(dest, op, (a, other), ty)
    if r < 0.5:
        op = rng.choice(ir.UNARY_OPS)
        if op == "bswap" and ty.width % 16:
            op = "ctpop"
        return Instruction(dest, op, (a,), ty)
    if r < 0.6:
        return Instruction(dest, "icmp", (a, other), ty.with_width(1), argty=ty, cond=rng.choice(ir.ICMP_CONDS))
    if r < 0.72:
        widths = [w for w in (1, 4, 8, 16, 32) if w != ty.width and w * ty.lanes <= 512]
        w = rng.choice(widths)
        op = "trunc" if w < ty.width else rng.choice(("zext", "sext"))
        return Instruction(dest, op, (a,), ty.with_width(w))
    if ty.vector and r < 0.82:
        n = rng.choice((2, ty.lanes))
        mask = tuple(rng.randrange(2 * ty.lanes) for _ in range(n))
        return Instruction(dest, "shufflevector", (a, other if isinstance(other, Ref) else a), vec_type(n, ty.width),
                           argty=ty, mask=mask)
    if ty.vector and r < 0.88:
        idx = Lit((rng.randrange(ty.lanes),))
        return Instruction(dest, "extractelement", (a, idx), ty.element(), argty=ty)
    if ty.vector and ty.width >= 4 and r < 0.95:
        fam = rng.choice(("pavg", "psrli", "psrai", "pslli"))
        callee = f"{fam}.v{ty.lanes}i{ty.width}"
        arg2 = other if fam == "pavg" else Lit((rng.randrange(ty.width + 2),))
        return Instruction(dest, "call", (a, arg2), ty, callee=callee)
    return Instruction(dest, rng.choice(("add", "xor", "and")), (a, other), ty)


def _straight(b: _Builder, avail: list, n: int):
    for _ in range(n):
        avail.append(b.emit(_instruction(b, avail)))


def _cond(b: _Builder, avail: list) -> Ref:
    flags = [n for n, t in avail if t == int_type(1)]
    if flags and b.rng.random() < 0.6:
        return Ref(b.rng.choice(flags))
    scalars = [(n, t) for n, t in avail if not t.vector]
    name, ty = b.rng.choice(scalars or avail)
    if ty.vector:
        d = b.name()
        b.emit(Instruction(d, "extractelement", (Ref(name), Lit((0,))), ty.element(), argty=ty))
        name, ty = d, ty.element()
    d = b.name()
    b.emit(Instruction(d, "icmp", (Ref(name), _const(b.rng, ty)), int_type(1), argty=ty,
                       cond=b.rng.choice(ir.ICMP_CONDS)))
    return Ref(d)


def _diamond(b: _Builder, avail: list):
    rng = b.rng
    c = _cond(b, avail)
    then, other, join = b.new_label("then"), b.new_label("else"), b.new_label("join")
    one_sided = rng.random() < 0.3
    b.close(Terminator("cbr", (c,), (then, join if one_sided else other)), then)
    arms = []
    for label in ([then] if one_sided else [then, other]):
        b.label = label
        local = list(avail)
        _straight(b, local, rng.randint(1, 3))
        arms.append((label, local[len(avail):]))
        b.close(Terminator("br", (), (join,)), None)
    if one_sided:
        arms.append((_pred_of(b, then), []))
    b.label = join
    before = list(avail)
    # One or two phis merging arm values with values from before the branch.
    for _ in range(rng.randint(1, 2)):
        label0, vals0 = arms[0]
        name, ty = rng.choice(vals0) if vals0 else rng.choice(before)
        incoming = [(Ref(name), label0)]
        for label, vals in arms[1:]:
            cands = [n for n, t in vals if t == ty] + _of_type(before, ty)
            incoming.append((Ref(rng.choice(cands)) if cands else _const(rng, ty), label))
        d = b.name()
        avail.append(b.emit(Instruction(d, "phi", tuple(a for a, _ in incoming), ty,
                                        incoming=tuple(l for _, l in incoming))))


def _pred_of(b: _Builder, then: str) -> str:
    # The block that branched to ``then`` falls through to the join directly.
    for blk in b.blocks:
        if then in blk.term.targets:
            return blk.label
    raise AssertionError("diamond without a branch block")


def _loop(b: _Builder, avail: list):
    rng = b.rng
    pre = b.label
    head, body, exit_ = b.new_label("head"), b.new_label("body"), b.new_label("exit")
    b.close(Terminator("br", (), (head,)), head)
    i, nxt = b.name(), b.name()
    acc_name, acc_ty = rng.choice(avail)
    acc, acc_next = b.name(), b.name()
    i8 = int_type(8)
    b.emit(Instruction(i, "phi", (Lit((0,)), Ref(nxt)), i8, incoming=(pre, body)))
    b.emit(Instruction(acc, "phi", (Ref(acc_name), Ref(acc_next)), acc_ty, incoming=(pre, body)))
    c = b.name()
    b.emit(Instruction(c, "icmp", (Ref(i), Lit((rng.randint(1, 4),))), int_type(1), argty=i8, cond="ult"))
    b.close(Terminator("cbr", (Ref(c),), (body, exit_)), body)
    local = avail + [(i, i8), (acc, acc_ty)]
    _straight(b, local, rng.randint(1, 3))
    same = [n for n, t in local[len(avail):] if t == acc_ty and n != acc]
    other = Ref(rng.choice(same)) if same else _const(rng, acc_ty)
    b.emit(Instruction(acc_next, rng.choice(("add", "xor", "or")), (Ref(acc), other), acc_ty))
    b.emit(Instruction(nxt, "add", (Ref(i), Lit((1,))), i8))
    b.close(Terminator("br", (), (head,)), exit_)
    avail.extend([(i, i8), (acc, acc_ty)])


def _memory(b: _Builder, avail: list, ptr: str, stored: list):
    rng = b.rng
    if stored and rng.random() < 0.5:
        ty = rng.choice(stored)
        d = b.name()
        avail.append(b.emit(Instruction(d, "load", (Ref(ptr),), ty)))
        return
    name, ty = rng.choice(avail)
    b.insts.append(Instruction(None, "store", (Ref(name), Ref(ptr)), ty))
    stored[:] = [ty]


def random_function(rng: random.Random, cfg: GenConfig = GenConfig(), name: str = "g") -> Function:
    b = _Builder(rng, cfg)
    params: list[tuple[str, Type]] = []
    for k in range(rng.randint(1, cfg.params)):
        ty = rng.choice(VECTORS) if rng.random() < cfg.p_vector else rng.choice(SCALARS)
        params.append((f"a{k}", ty))
    avail = list(params)
    use_mem = rng.random() < cfg.p_memory
    if use_mem:
        params.append(("p", PTR))
    stored: list = []
    _straight(b, avail, rng.randint(1, cfg.straight))
    for _ in range(rng.randint(0, cfg.regions)):
        r = rng.random()
        if r < cfg.p_diamond:
            _diamond(b, avail)
        elif r < cfg.p_diamond + cfg.p_loop:
            _loop(b, avail)
        elif use_mem and r < cfg.p_diamond + cfg.p_loop + cfg.p_memory:
            _memory(b, avail, "p", stored)
        _straight(b, avail, rng.randint(1, cfg.straight))
    ret_name, ret_ty = avail[-1]
    b.close(Terminator("ret", (Ref(ret_name),)), None)
    return Function(name, tuple(params), ret_ty, tuple(b.blocks))


def random_functions(n: int, seed: int = 0, cfg: GenConfig = GenConfig()) -> list[Function]:
    rng = random.Random(seed)
    return [random_function(rng, cfg, f"g{k}") for k in range(n)]
