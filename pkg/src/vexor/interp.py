"""Batched, poison-aware execution of functions and rewrites.

Both evaluators run N independent inputs at once.  Functions are executed
SIMT style: every row carries its own position in the CFG, so loops and
diverging branches work, and a loop-free function costs one pass over its
blocks.  Single-input wrappers (:func:`eval_function`, :func:`eval_rewrite`)
sit on top.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import intrinsics, ir, kernels
from .cfg import reverse_postorder
from .ir import Function, Lit, Ref
from .kernels import U64, Batch
from .rewrite import Const, Hole, Node, Op, Val, postorder
from .types import PTR, Type, int_type


class Trap(Exception):
    """Immediate undefined behaviour (division by zero, branch on poison...)."""


LaneValue = Optional[int]  # None is poison


@dataclass(frozen=True)
class VectorValue:
    ty: Type
    lanes: tuple[LaneValue, ...]

    def __post_init__(self):
        if len(self.lanes) != self.ty.lanes:
            raise ValueError(f"{self.ty} needs {self.ty.lanes} lanes")
        for v in self.lanes:
            if v is not None and not 0 <= v <= self.ty.mask:
                raise ValueError(f"lane value {v} does not fit {self.ty}")

    @classmethod
    def of(cls, ty: Type, *values) -> "VectorValue":
        """``of(ty, 5)`` splats; ``of(ty, 1, 2, None)`` gives lanes (None is poison)."""
        if len(values) == 1 and ty.lanes > 1:
            values = values * ty.lanes
        return cls(ty, tuple(None if v is None else v & ty.mask for v in values))

    def signed(self) -> tuple[Optional[int], ...]:
        w = self.ty.width
        return tuple(None if v is None else (v - (1 << w) if v >> (w - 1) else v) for v in self.lanes)

    def to_batch(self) -> Batch:
        vals = np.array([[0 if v is None else v for v in self.lanes]], dtype=U64)
        poison = np.array([[v is None for v in self.lanes]], dtype=bool)
        return Batch(self.ty, vals, poison)

    @classmethod
    def from_batch(cls, b: Batch, row: int = 0) -> "VectorValue":
        return cls(b.ty, tuple(None if p else int(v) for v, p in zip(b.vals[row], b.poison[row])))

    def __str__(self):
        txt = ["poison" if v is None else str(v) for v in self.lanes]
        return txt[0] if len(txt) == 1 else "<" + ", ".join(txt) + ">"


CellKey = tuple  # (base pointer parameter, byte offset, Type)


@dataclass
class Env:
    values: dict[str, VectorValue] = field(default_factory=dict)
    memory: dict[CellKey, VectorValue] = field(default_factory=dict)


# -------------------------------------------------------------- single ops

def apply_op(op: str, args: list[Batch], ty: Type, cond=None, mask=None, callee=None):
    """Evaluate one operation; returns ``(result, ub_rows or None)``."""
    if op in ir.BINARY_OPS:
        return kernels.binary(op, args[0], args[1])
    if op in ir.UNARY_OPS:
        return kernels.unary(op, args[0]), None
    if op in ir.CONV_OPS:
        return kernels.convert(op, args[0], ty), None
    if op == "icmp":
        return kernels.icmp(cond, args[0], args[1], ty), None
    if op == "extractelement":
        return kernels.extractelement(args[0], args[1], ty), None
    if op == "insertelement":
        return kernels.insertelement(args[0], args[1], args[2]), None
    if op == "shufflevector":
        return kernels.shufflevector(args[0], args[1], mask, ty), None
    if op == "call":
        return intrinsics.call(intrinsics.lookup(callee), args), None
    raise ValueError(f"cannot evaluate {op}")


# ----------------------------------------------------------------- memory

class Memory:
    """Cells keyed by (base, offset, type); unseen cells read deterministic fresh values."""

    def __init__(self, rows: int, seed: int = 0, init: Optional[dict] = None):
        self.rows = rows
        self.seed = seed
        self.cells: dict[CellKey, Batch] = dict(init or {})

    def fresh(self, key: CellKey) -> Batch:
        ty = key[2]
        h = zlib.crc32(f"{key[0]}|{key[1]}|{ty}".encode())
        rng = np.random.default_rng([self.seed, h])
        vals = rng.integers(0, 1 << 64, size=(self.rows, ty.lanes), dtype=np.uint64)
        return Batch(ty, vals & kernels.lane_mask(ty.width), np.zeros((self.rows, ty.lanes), dtype=bool))

    def cell(self, key: CellKey) -> Batch:
        if key not in self.cells:
            self.cells[key] = self.fresh(key)
        return self.cells[key]


# ------------------------------------------------------------- functions

@dataclass
class RunResult:
    ret: Batch
    trapped: np.ndarray  # bool per row: immediate UB (or step limit) hit
    values: dict[str, Batch]
    memory: Memory
    snapshot: Optional[dict[str, Batch]] = None
    snapshot_taken: Optional[np.ndarray] = None


@dataclass
class _Compiled:
    order: list[str]
    blocks: dict[str, ir.Block]
    operand_types: dict[int, list]
    label_id: dict[str, int]


_COMPILED: dict[int, tuple[Function, _Compiled]] = {}


def _compile(f: Function) -> _Compiled:
    hit = _COMPILED.get(id(f))
    if hit is not None and hit[0] is f:
        return hit[1]
    types = f.param_types()
    for _, inst in f.instructions():
        if inst.dest is not None:
            types[inst.dest] = inst.ty
    optys = {}
    for _, inst in f.instructions():
        optys[id(inst)] = ir.operand_types(inst, types)
    c = _Compiled(reverse_postorder(f), {b.label: b for b in f.blocks}, optys,
                  {b.label: k for k, b in enumerate(f.blocks)})
    if len(_COMPILED) > 4096:
        _COMPILED.clear()
    _COMPILED[id(f)] = (f, c)
    return c


def _scatter(dst: Batch, idx, src: Batch, full: bool) -> None:
    if full:
        dst.vals[...] = src.vals
        dst.poison[...] = src.poison
    else:
        dst.vals[idx] = src.vals
        dst.poison[idx] = src.poison


def run_function(f: Function, args: dict[str, Batch], memory: Optional[Memory] = None,
                 watch: Optional[tuple[str, list[str]]] = None, step_limit: int = 10_000) -> RunResult:
    """Execute ``f`` on N rows of arguments.

    ``watch = (v, names)`` copies the current values of ``names`` each time a
    row defines ``v``; the last copy per row ends up in ``RunResult.snapshot``.
    """
    c = _compile(f)
    n = next(iter(args.values())).rows if args else (memory.rows if memory else 1)
    memory = memory if memory is not None else Memory(n)
    values: dict[str, Batch] = {}
    pointers: dict[str, tuple[str, int]] = {}
    for p, t in f.params:
        if t.pointer:
            pointers[p] = (p, 0)
        else:
            values[p] = args[p]
    ret = Batch.zeros(f.ret_ty, n)
    trapped = np.zeros(n, dtype=bool)
    prev = np.full(n, -1, dtype=np.int64)
    pending = {f.entry.label: np.ones(n, dtype=bool)}
    steps = np.zeros(n, dtype=np.int64)
    snapshot, taken = None, None
    if watch is not None:
        snapshot, taken = {}, np.zeros(n, dtype=bool)

    def operand(a, t, idx, full) -> Batch:
        if isinstance(a, Ref):
            b = values[a.name]
            return b if full else b.take(idx)
        return Batch.const(t, a.lanes, len(idx))

    while pending:
        progressed = False
        for label in c.order:
            rows = pending.pop(label, None)
            if rows is None or not rows.any():
                continue
            progressed = True
            steps[rows] += 1
            over = rows & (steps > step_limit)
            if over.any():
                trapped |= over
                rows = rows & ~over
                if not rows.any():
                    continue
            idx = np.flatnonzero(rows)
            full = len(idx) == n
            blk = c.blocks[label]
            # Phis read their operands in parallel, before any is written.
            phi_out = []
            for inst in blk.insts:
                if inst.op != "phi":
                    break
                out = Batch.zeros(inst.ty, len(idx))
                came = prev[idx]
                for a, lab in zip(inst.args, inst.incoming):
                    sel = came == c.label_id[lab]
                    if sel.any():
                        src = operand(a, inst.ty, idx, full)
                        out.vals[sel] = src.vals[sel]
                        out.poison[sel] = src.poison[sel]
                phi_out.append((inst.dest, out))
            for name, out in phi_out:
                if name not in values:
                    values[name] = Batch.zeros(out.ty, n)
                _scatter(values[name], idx, out, full)
            alive = np.ones(len(idx), dtype=bool)
            for inst in blk.insts[len(phi_out):]:
                op = inst.op
                if op == "gep":
                    base, off = pointers[inst.args[0].name]
                    pointers[inst.dest] = (base, off + inst.args[1].lanes[0])
                    continue
                if op == "load":
                    base, off = pointers[inst.args[0].name]
                    res = memory.cell((base, off, inst.ty))
                    res = res if full else res.take(idx)
                elif op == "store":
                    base, off = pointers[inst.args[1].name]
                    cell = memory.cell((base, off, inst.ty))
                    src = operand(inst.args[0], inst.ty, idx, full)
                    live_idx = idx[alive]
                    cell.vals[live_idx] = src.vals[alive]
                    cell.poison[live_idx] = src.poison[alive]
                    continue
                else:
                    tys = c.operand_types[id(inst)]
                    ops = [operand(a, t, idx, full) for a, t in zip(inst.args, tys)]
                    res, ub = apply_op(op, ops, inst.ty, inst.cond, inst.mask, inst.callee)
                    if ub is not None:
                        alive &= ~ub
                if inst.dest not in values:
                    values[inst.dest] = Batch.zeros(inst.ty, n)
                _scatter(values[inst.dest], idx, res, full)
                if watch is not None and inst.dest == watch[0]:
                    live_idx = idx[alive]
                    for name in watch[1]:
                        if name in values:
                            if name not in snapshot:
                                snapshot[name] = Batch.zeros(values[name].ty, n)
                            snapshot[name].vals[live_idx] = values[name].vals[live_idx]
                            snapshot[name].poison[live_idx] = values[name].poison[live_idx]
                    taken[live_idx] = True
            t = blk.term
            if not alive.all():
                trapped[idx[~alive]] = True
            if t.kind == "ret":
                src = operand(t.args[0], f.ret_ty, idx, full)
                ret.vals[idx[alive]] = src.vals[alive]
                ret.poison[idx[alive]] = src.poison[alive]
                continue
            me = c.label_id[label]
            if t.kind == "br":
                go = idx[alive]
                prev[go] = me
                _add(pending, t.targets[0], go, n)
                continue
            cond = operand(t.args[0], int_type(1), idx, full)
            bad = cond.poison[:, 0] & alive
            if bad.any():
                # Branching on poison is immediate UB.
                trapped[idx[bad]] = True
                alive &= ~bad
            taken_true = alive & (cond.vals[:, 0] == 1)
            taken_false = alive & (cond.vals[:, 0] == 0)
            prev[idx[alive]] = me
            _add(pending, t.targets[0], idx[taken_true], n)
            _add(pending, t.targets[1], idx[taken_false], n)
        if not progressed:
            break
    return RunResult(ret, trapped, values, memory, snapshot, taken)


def _add(pending, label, rows_idx, n):
    if len(rows_idx) == 0:
        return
    m = pending.get(label)
    if m is None:
        m = np.zeros(n, dtype=bool)
        pending[label] = m
    m[rows_idx] = True


def eval_function(f: Function, env: Env) -> VectorValue:
    """Evaluate ``f`` on one input.  Raises :class:`Trap` on immediate UB."""
    args = {}
    for p, t in f.params:
        if t.pointer:
            continue
        if p not in env.values:
            raise KeyError(f"parameter %{p} is not bound")
        v = env.values[p]
        if v.ty != t:
            raise TypeError(f"%{p} has type {t}, bound to {v.ty}")
        args[p] = v.to_batch()
    mem = Memory(1, init={k: v.to_batch() for k, v in env.memory.items()})
    res = run_function(f, args, mem)
    if res.trapped[0]:
        raise Trap(f"@{f.name} has undefined behaviour on this input")
    return VectorValue.from_batch(res.ret)


# -------------------------------------------------------------- rewrites

def eval_rewrite_batch(r: Node, bindings: dict[str, Batch], hole_values: Optional[dict[int, Batch]] = None,
                       rows: Optional[int] = None):
    """Returns ``(result, ub_rows)`` where ``ub_rows`` is a bool array per row."""
    if rows is None:
        if bindings:
            rows = next(iter(bindings.values())).rows
        elif hole_values:
            rows = next(iter(hole_values.values())).rows
        else:
            rows = 1
    ub = np.zeros(rows, dtype=bool)
    memo: dict[Node, Batch] = {}
    for node in postorder(r):
        if isinstance(node, Val):
            b = bindings[node.name]
            if b.ty != node.ty:
                if b.ty.bits != node.ty.bits:
                    raise TypeError(f"val %{node.name}: bound {b.ty}, leaf {node.ty}")
                b = kernels.bitcast(b, node.ty)
            memo[node] = b
        elif isinstance(node, Const):
            memo[node] = Batch.const(node.ty, node.lanes, rows)
        elif isinstance(node, Hole):
            if not hole_values or node.index not in hole_values:
                raise ValueError("rewrite still has holes")
            memo[node] = hole_values[node.index]
        else:
            res, u = apply_op(node.op, [memo[a] for a in node.args], node.ty, node.cond, node.mask, node.callee)
            if u is not None:
                ub |= u
            memo[node] = res
    return memo[r], ub


def eval_rewrite(r: Node, bindings: Env) -> VectorValue:
    b = {k: v.to_batch() for k, v in bindings.values.items()}
    res, ub = eval_rewrite_batch(r, b, rows=1)
    if ub[0]:
        raise Trap("rewrite has undefined behaviour on this input")
    return VectorValue.from_batch(res)
