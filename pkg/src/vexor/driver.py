"""Whole-function optimization: slice, look up, synthesize, apply.

Eligible values (integer or integer-vector instruction results) are visited
in reverse definition order, so a value is offered to the synthesizer
before the values it is computed from.  A rewrite of a late value usually
makes its operands dead; those are then skipped rather than rewritten in a
way that would hide the larger pattern.  Each value is sliced from the
current function, so it always sees the code earlier rewrites left behind.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

from .cache import RewriteCache, entry_for, rewrite_from
from .cfg import dominators
from .cost import CostTable, load_cost_table, uop_cost
from .ir import Block, Function, Instruction, Lit, Ref
from .rewrite import Const, Hole, Node, Op, Val, holes, postorder, print_rewrite
from .slicer import DEFAULT_DEPTH, SliceError, extract_slice
from .synth import SynthConfig, Synthesizer
from .validate import validate
from .verify import Verifier

log = logging.getLogger(__name__)

CACHE_HIT = "cache-hit"
REWRITE = "rewrite"
NO_IMPROVEMENT = "no-improvement"
TIMEOUT = "timeout"
OUTCOMES = (CACHE_HIT, REWRITE, NO_IMPROVEMENT, TIMEOUT)
PURE_SKIP = frozenset(("store",))  # never removed by the dead-code sweep


class RewriteRejected(ValueError):
    pass


@dataclass(frozen=True)
class OptConfig:
    target: str = "cascade"
    depth: int = DEFAULT_DEPTH
    synth: SynthConfig = field(default_factory=SynthConfig)

    def describe(self) -> str:
        s = self.synth
        return (f"depth={self.depth},max_insts={s.max_insts},reinterpret={int(s.reinterpret)},"
                f"timeout={s.timeout:g},exhaustive_bits={s.verify.exhaustive_bits},"
                f"samples={s.verify.samples},seed={s.verify.seed}")


@dataclass
class ValueOutcome:
    value: str
    outcome: str
    cost_before: int
    cost_after: int
    applied: bool = False
    rewrite: str = ""
    verdict: str = ""
    inputs_checked: int = 0
    candidates: int = 0
    elapsed: float = 0.0


@dataclass
class RunReport:
    function: str
    target: str
    outcomes: list = field(default_factory=list)
    uops_before: int = 0
    uops_after: int = 0
    synth_calls: int = 0
    wall_time: float = 0.0

    @property
    def examined(self) -> int:
        return len(self.outcomes)

    def count(self, outcome: str) -> int:
        return sum(1 for o in self.outcomes if o.outcome == outcome)

    @property
    def rewrites_applied(self) -> int:
        return sum(1 for o in self.outcomes if o.applied)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(examined=self.examined, rewrites_applied=self.rewrites_applied,
                 **{k.replace("-", "_"): self.count(k) for k in OUTCOMES})
        return d


# ------------------------------------------------------------ rewriting IR

def _fresh(base: str, taken: set) -> str:
    k = 1
    while f"{base}.{k}" in taken:
        k += 1
    name = f"{base}.{k}"
    taken.add(name)
    return name


def _argty(n: Op):
    # Conversions carry no operand type; the printer derives it.
    if n.op in ("icmp", "shufflevector", "extractelement", "insertelement"):
        return n.args[0].ty
    return None


def materialize(r: Node, v: str, binding: dict, types: dict, taken: set) -> tuple[list[Instruction], object]:
    """Instructions computing ``r``; the root (if any) is named ``v``.

    ``binding`` maps rewrite leaf names to values of the function, ``types``
    gives those values' declared types.  Returns the instructions and the
    operand standing for the whole rewrite.
    """
    if holes(r):
        raise RewriteRejected("rewrite still has holes")
    out: list[Instruction] = []
    memo: dict[Node, object] = {}
    want = types[v]
    needs_root_cast = r.ty != want

    def emit(op, args, ty, argty=None, cond=None, mask=None, callee=None, dest=None):
        name = dest or _fresh(v, taken)
        out.append(Instruction(name, op, tuple(args), ty, argty, cond, mask, callee))
        return Ref(name)

    nodes = postorder(r)
    for n in nodes:
        if isinstance(n, Val):
            if n.name not in binding:
                raise RewriteRejected(f"leaf %{n.name} has no binding")
            a = binding[n.name]
            aty = types[a.name] if isinstance(a, Ref) else n.ty
            if isinstance(a, Ref) and aty != n.ty:
                if aty.bits != n.ty.bits:
                    raise RewriteRejected(f"leaf %{n.name} is {aty}, rewrite reads it as {n.ty}")
                a = emit("bitcast", [a], n.ty)
            memo[n] = a
        elif isinstance(n, Const):
            memo[n] = Lit(n.lanes)
        elif isinstance(n, Hole):
            raise RewriteRejected("rewrite still has holes")
        else:
            dest = v if (n is r and not needs_root_cast) else None
            memo[n] = emit(n.op, [memo[a] for a in n.args], n.ty, _argty(n), n.cond, n.mask, n.callee, dest)
    root = memo[r]
    if needs_root_cast:
        if r.ty.bits != want.bits:
            raise RewriteRejected(f"rewrite produces {r.ty}, %{v} is {want}")
        root = emit("bitcast", [root], want, dest=v)
    elif not isinstance(r, Op):
        # A bare leaf or constant: copy it through a no-op bitcast.
        root = emit("bitcast", [root], want, dest=v)
    return out, root


def dead_code_elimination(f: Function) -> Function:
    blocks = list(f.blocks)
    while True:
        used = set()
        for b in blocks:
            for i in b.insts:
                used.update(i.refs())
            used.update(b.term.refs())
        changed = False
        nxt = []
        for b in blocks:
            keep = tuple(i for i in b.insts if i.dest is None or i.op in PURE_SKIP or i.dest in used)
            changed |= len(keep) != len(b.insts)
            nxt.append(Block(b.label, keep, b.term))
        blocks = nxt
        if not changed:
            return Function(f.name, f.params, f.ret_ty, tuple(blocks))


def apply_rewrite(f: Function, v: str, r: Node, binding: Optional[dict] = None) -> Function:
    """Replace the definition of ``v`` by ``r`` and sweep dead code."""
    if f.definition(v) is None:
        raise RewriteRejected(f"%{v} is not defined")
    binding = binding if binding is not None else {x.name: Ref(x.name) for x in postorder(r) if isinstance(x, Val)}
    types = {**f.param_types(), **{i.dest: i.ty for _, i in f.instructions() if i.dest is not None}}
    vblock = f.def_block(v)
    dom = dominators(f)
    position = {}
    for b in f.blocks:
        for k, i in enumerate(b.insts):
            if i.dest is not None:
                position[i.dest] = (b.label, k)
    vpos = position[v][1]
    for a in binding.values():
        if isinstance(a, Ref) and a.name in position:
            blk, k = position[a.name]
            if a.name == v or not (blk in dom[vblock] and (blk != vblock or k < vpos)):
                raise RewriteRejected(f"%{a.name} does not dominate %{v}")
    taken = set(types)
    insts, _ = materialize(r, v, binding, types, taken)
    blocks = []
    for b in f.blocks:
        if b.label != vblock:
            blocks.append(b)
            continue
        body = [i for i in b.insts if i.dest != v]
        at = vpos
        if f.definition(v).op == "phi":
            at = sum(1 for i in b.insts if i.op == "phi") - 1
        body[at:at] = insts
        blocks.append(Block(b.label, tuple(body), b.term))
    out = dead_code_elimination(Function(f.name, f.params, f.ret_ty, tuple(blocks)))
    diags = validate(out)
    if diags:
        raise RewriteRejected("; ".join(str(d) for d in diags))
    return out


# -------------------------------------------------------------- optimizing

def eligible_values(f: Function) -> list[str]:
    return [i.dest for _, i in f.instructions()
            if i.dest is not None and i.ty.is_int and i.op not in ("store", "gep")]


class Optimizer:
    def __init__(self, cfg: OptConfig = OptConfig(), cache: Optional[RewriteCache] = None,
                 table: Optional[CostTable] = None):
        self.cfg = cfg
        self.cache = cache or RewriteCache(None)
        self.table = table or load_cost_table(target=cfg.target)

    def optimize(self, f: Function) -> tuple[Function, RunReport]:
        t0 = time.perf_counter()
        report = RunReport(f.name, self.cfg.target, uops_before=uop_cost(f, self.table))
        for v in reversed(eligible_values(f)):
            if f.definition(v) is None:
                continue  # removed by an earlier rewrite
            try:
                sl = extract_slice(f, v, self.cfg.depth)
            except SliceError as e:
                log.info("skipping %%%s: %s", v, e)
                continue
            if not any(b.insts for b in sl.function.blocks):
                continue
            f = self._value(f, v, sl, report)
        report.uops_after = uop_cost(f, self.table)
        report.wall_time = time.perf_counter() - t0
        return f, report

    def _value(self, f: Function, v: str, sl, report: RunReport) -> Function:
        t0 = time.perf_counter()
        spec = sl.function
        key, canon, entry = self.cache.lookup(spec, self.cfg.target)
        before = uop_cost(spec, self.table)
        record = None
        if entry is not None:
            out = ValueOutcome(v, CACHE_HIT, entry.cost_before, entry.cost_after)
            rw = rewrite_from(entry, canon)
            if rw is not None:
                # Re-verify: a stale or hand-edited entry must not slip through.
                verdict = Verifier(spec, self.cfg.synth.verify).refine(rw)
                out.verdict, out.inputs_checked = verdict.status.value, verdict.inputs_checked
                if not verdict.status.proved:
                    log.warning("cached rewrite for %%%s failed re-verification (%s)", v, verdict.status.value)
                    rw = None
        else:
            report.synth_calls += 1
            synth = Synthesizer(spec, self.cfg.synth, self.table)
            record = synth.run()
            if record is not None:
                out = ValueOutcome(v, REWRITE, record.cost_before, record.cost_after,
                                   verdict=record.verdict.status.value,
                                   inputs_checked=record.verdict.inputs_checked)
                rw = record.rewrite
            else:
                kind = TIMEOUT if synth.stats.timed_out else NO_IMPROVEMENT
                out = ValueOutcome(v, kind, before, before)
                rw = None
            out.candidates = synth.stats.candidates
            self.cache.put(entry_for(key, canon, self.cfg.target, record, before, self.cfg.describe()))
        if rw is not None:
            out.rewrite = print_rewrite(rw)
            binding = {p: Ref(o) for p, o in sl.binding.items()}
            for leaf in postorder(rw):
                if isinstance(leaf, Val) and leaf.name not in binding:
                    binding[leaf.name] = Ref(leaf.name)
            try:
                f = apply_rewrite(f, v, rw, binding)
                out.applied = True
            except RewriteRejected as e:
                log.warning("rewrite for %%%s rejected: %s", v, e)
        out.elapsed = time.perf_counter() - t0
        report.outcomes.append(out)
        return f


def optimize_function(f: Function, cfg: OptConfig = OptConfig(), cache: Optional[RewriteCache] = None,
                      table: Optional[CostTable] = None) -> tuple[Function, RunReport]:
    return Optimizer(cfg, cache, table).optimize(f)
