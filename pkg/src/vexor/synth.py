"""Enumerative synthesis of cheaper rewrites for one slice.

Candidates are built bottom up.  A bank holds hole-free terms by size, each
evaluated on a fixed probe batch; two terms of the same type that agree on
every probe (values, poison and UB) are interchangeable for the search, so
only the first, cheapest one is kept.  Root candidates are bank terms of the
slice's result width, plus one extra operation over a bank term whose other
operand is a hole.  Constants therefore appear symbolically only at the
root; deeper constants come from a small pool.

The stream is sorted by the static weight of :func:`vexor.cost.approx_cost`;
every candidate's uOp cost is known before verification, so candidates that
could not beat the best proof so far are skipped without being checked.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import intrinsics, ir
from .cost import CostTable, approx_cost, load_cost_table, node_weight, uop_cost
from .interp import apply_op, eval_rewrite_batch
from .ir import Function, Lit, Ref
from .kernels import Batch
from .rewrite import Const, Hole, Node, Op, RewriteError, Val, holes, inst_count, make, postorder, vals
from .types import LANE_WIDTHS, MAX_BITS, Type, reinterpretations, vec_type
from .verify import Status, Verdict, VerifyConfig, Verifier, leaf_values, random_inputs, _concat

OPCODE_ORDER = {op: k for k, op in enumerate(
    ir.UNARY_OPS + ir.BINARY_OPS + ("icmp",) + ir.CONV_OPS + ir.VECTOR_OPS)}


@dataclass(frozen=True)
class SynthConfig:
    max_insts: int = 3
    reinterpret: bool = True
    timeout: float = 60.0
    target: str = "cascade"
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    max_terms: int = 20_000
    commutative_dedup: bool = True
    probe_rows: int = 64

    def __post_init__(self):
        if not 1 <= self.max_insts <= 5:
            raise ValueError("max instructions must be between 1 and 5")


@dataclass
class RewriteRecord:
    value: str  # the slice's result value
    rewrite: Node
    cost_before: int
    cost_after: int
    verdict: Verdict
    target: str = "cascade"

    @property
    def gain(self) -> int:
        return self.cost_before - self.cost_after


@dataclass
class SynthStats:
    terms: int = 0
    candidates: int = 0
    skipped_cost: int = 0
    refine_calls: int = 0
    cegis_calls: int = 0
    elapsed: float = 0.0
    timed_out: bool = False


@dataclass
class Candidate:
    node: Node
    size: int
    weight: int
    key: tuple
    term: Optional["Term"] = None  # bank term when the candidate is hole-free

    @property
    def has_holes(self) -> bool:
        return self.term is None


@dataclass
class Term:
    node: Node
    size: int
    value: Batch
    ub: np.ndarray
    key: tuple


# ------------------------------------------------------------------ pools

def constant_pool(ty: Type, literals: dict[int, set], spec_lits: list[tuple]) -> list[Const]:
    """Inner constants: splats of 0, 1, all-ones and slice literals, plus the
    slice's own vector literals of this type."""
    m = ty.element().mask
    lanes = [0, 1, m] + sorted(literals.get(ty.width, ()))
    out = [Const(ty, (v & m,) * ty.lanes) for v in dict.fromkeys(v & m for v in lanes)]
    for lit in spec_lits:
        if len(lit) == ty.lanes and ty.vector:
            c = Const(ty, tuple(v & m for v in lit))
            if c not in out:
                out.append(c)
    return out


def mask_pool(lanes: int, width: int, spec_masks: list[tuple]) -> list[tuple[tuple[int, ...], bool]]:
    """Shuffle masks as (mask, uses second operand)."""
    out: list[tuple[tuple[int, ...], bool]] = []

    def add(m, two=False):
        m = tuple(m)
        if len(m) >= 2 and len(m) * width <= MAX_BITS and (m, two) not in out:
            out.append((m, two))

    half = lanes // 2
    add(range(lanes - 1, -1, -1))
    add(range(0, lanes, 2))
    add(range(1, lanes, 2))
    add(range(half))
    add(range(half, lanes))
    add([0] * lanes)
    for m in spec_masks:
        if max(m) < lanes:
            add(m)
        else:
            add(m, True)
    add([k // 2 + (lanes if k % 2 else 0) for k in range(lanes)], True)
    add([half + k // 2 + (lanes if k % 2 else 0) for k in range(lanes)], True)
    add(range(2 * lanes), True)
    return out


def intrinsics_over(ty: Type) -> list[intrinsics.IntrinsicDescriptor]:
    """Unmasked descriptors whose first operand has type ``ty``."""
    if not ty.vector:
        return []
    out = []
    for fam in intrinsics.FAMILIES:
        if fam == "pmadd_wd":
            if ty.lanes % 2:
                continue
            desc = intrinsics.IntrinsicDescriptor(fam, ty.lanes // 2, ty.width * 2)
        else:
            desc = intrinsics.IntrinsicDescriptor(fam, ty.lanes, ty.width)
        if intrinsics.valid(desc) and desc.input_type == ty:
            out.append(desc)
    return out


# ------------------------------------------------------------- enumeration

class Enumerator:
    """Builds the term bank and the root candidate stream for one slice."""

    def __init__(self, spec: Function, cfg: SynthConfig, verifier: Optional[Verifier] = None):
        self.spec = spec
        self.cfg = cfg
        self.verifier = verifier or Verifier(spec, cfg.verify)
        self.root_ty = spec.ret_ty
        self.leaves = leaf_values(spec)
        self.leaf_index = {n: k for k, n in enumerate(self.leaves)}
        self.literals = self.verifier.constants
        self.spec_lits, self.spec_masks = [], []
        for _, inst in spec.instructions():
            for a in inst.args:
                if isinstance(a, Lit) and len(a.lanes) > 1:
                    self.spec_lits.append(a.lanes)
            if inst.mask is not None:
                self.spec_masks.append(tuple(inst.mask))
        v = self.verifier
        rng = np.random.default_rng([cfg.verify.seed, 2])
        probe = random_inputs(v.params, cfg.probe_rows, rng)
        self.probe = _concat(v.structured, probe) if v.params else {}
        self.spec_out, self.spec_ub, self.leaf_vals = v.evaluate_spec(self.probe)
        self.rows = self.spec_out.rows
        self.bank: list[list[Term]] = []
        self.seen: set = set()
        self.truncated = False

    # terms ---------------------------------------------------------------

    def _signature(self, ty: Type, value: Batch, ub) -> tuple:
        clean = np.where(value.poison, 0, value.vals)
        return (ty, clean.tobytes(), value.poison.tobytes(), np.asarray(ub).tobytes())

    def _add(self, level: list, node: Node, size: int, value: Batch, ub, key: tuple) -> Optional[Term]:
        if len(ub) and ub.all():
            return None
        sig = self._signature(node.ty, value, ub)
        if sig in self.seen:
            return None
        self.seen.add(sig)
        t = Term(node, size, value, ub, key)
        level.append(t)
        return t

    def _leaf_terms(self) -> list[Term]:
        level: list[Term] = []
        for name in self.leaves:
            base = self.leaf_vals[name]
            ty = base.ty
            views = [ty]
            if self.cfg.reinterpret:
                views += [t for t in reinterpretations(ty.bits) if t != ty]
            for k, vty in enumerate(views):
                node: Node = Val(ty, name)
                value = base
                if vty != ty:
                    node = Op("bitcast", (node,), vty)
                    value, _ = apply_op("bitcast", [base], vty)
                self._add(level, node, 0, value, np.zeros(self.rows, dtype=bool),
                          (self.leaf_index[name], k))
        return level

    def _make(self, op, args, ty=None, cond=None, mask=None, callee=None) -> Optional[Op]:
        try:
            return make(op, args, ty, cond, mask, callee)
        except (RewriteError, ValueError):
            return None

    def _eval(self, node: Op, parts: list) -> tuple[Batch, np.ndarray]:
        vals_, ub = [], np.zeros(self.rows, dtype=bool)
        for p in parts:
            if isinstance(p, Term):
                vals_.append(p.value)
                ub = ub | p.ub
            else:
                vals_.append(Batch.const(p.ty, p.lanes, self.rows))
        res, u = apply_op(node.op, vals_, node.ty, node.cond, node.mask, node.callee)
        return res, ub if u is None else ub | u

    def _operations(self, size: int) -> Iterator[tuple[Op, list, tuple]]:
        """All one-node extensions whose children sizes sum to ``size - 1``."""
        bank = self.bank
        for s1 in range(size):
            for i, t in enumerate(bank[s1]):
                ty = t.node.ty
                k1 = (s1, i)
                if s1 == size - 1:
                    for op in ir.UNARY_OPS:
                        yield op, [t], (OPCODE_ORDER[op], k1)
                    for w in LANE_WIDTHS:
                        if w * ty.lanes > MAX_BITS:
                            continue
                        if w > ty.width:
                            for op in ("zext", "sext"):
                                yield op, [t, ty.with_width(w)], (OPCODE_ORDER[op], k1, w)
                        elif w < ty.width:
                            yield "trunc", [t, ty.with_width(w)], (OPCODE_ORDER["trunc"], k1, w)
                    for c in constant_pool(ty, self.literals, self.spec_lits):
                        for op in ir.BINARY_OPS:
                            yield op, [t, c], (OPCODE_ORDER[op], k1, c.lanes)
                            if op not in ir.COMMUTATIVE:
                                yield op, [c, t], (OPCODE_ORDER[op], c.lanes, k1)
                        for cond in ir.ICMP_CONDS:
                            yield "icmp", [t, c, cond], (OPCODE_ORDER["icmp"], cond, k1, c.lanes)
                    if ty.vector:
                        for m, two in mask_pool(ty.lanes, ty.width, self.spec_masks):
                            if not two:
                                yield "shufflevector", [t, t, m], (OPCODE_ORDER["shufflevector"], m, k1)
                        for lane in range(ty.lanes):
                            yield "extractelement", [t, Const(Type(32), (lane,))], (OPCODE_ORDER["extractelement"], k1, lane)
                    for desc in intrinsics_over(ty):
                        name = intrinsics.canonical_name(desc)
                        if desc.is_shift:
                            for c in sorted(self.literals.get(desc.width, ())) or [1]:
                                yield "call", [t, Const(Type(32), (c,)), name], (-1, name, k1, c)
                        else:
                            for c in constant_pool(ty, self.literals, self.spec_lits):
                                yield "call", [t, c, name], (-1, name, k1, c.lanes)
                s2 = size - 1 - s1
                if s2 < 0:
                    continue
                for j, u in enumerate(bank[s2]):
                    if u.node.ty != ty or (s2, j) == k1:
                        continue
                    k2 = (s2, j)
                    ordered = k1 < k2
                    for op in ir.BINARY_OPS:
                        if op in ir.COMMUTATIVE and self.cfg.commutative_dedup and not ordered:
                            continue
                        yield op, [t, u], (OPCODE_ORDER[op], k1, k2)
                    for cond in ir.ICMP_CONDS:
                        yield "icmp", [t, u, cond], (OPCODE_ORDER["icmp"], cond, k1, k2)
                    if ty.vector:
                        for m, two in mask_pool(ty.lanes, ty.width, self.spec_masks):
                            if two:
                                yield "shufflevector", [t, u, m], (OPCODE_ORDER["shufflevector"], m, k1, k2)
                    for desc in intrinsics_over(ty):
                        if not desc.is_shift:
                            yield "call", [t, u, intrinsics.canonical_name(desc)], (-1, desc, k1, k2)

    def _build_level(self, size: int) -> list[Term]:
        level: list[Term] = []
        total = sum(len(l) for l in self.bank)
        for op, parts, key in self._operations(size):
            if total + len(level) >= self.cfg.max_terms:
                self.truncated = True
                break
            node = self._node(op, parts)
            if node is None:
                continue
            children = [p for p in parts if isinstance(p, (Term, Const))]
            value, ub = self._eval(node, children)
            self._add(level, node, size, value, ub, key)
        return level

    def _node(self, op, parts) -> Optional[Op]:
        args = [p.node if isinstance(p, Term) else p for p in parts if isinstance(p, (Term, Const))]
        extra = [p for p in parts if not isinstance(p, (Term, Const))]
        if op in ("zext", "sext", "trunc"):
            return self._make(op, args, extra[0])
        if op == "icmp":
            return self._make("icmp", args, cond=extra[0])
        if op == "shufflevector":
            return self._make("shufflevector", args, mask=extra[0])
        if op == "call":
            return self._make("call", args, callee=extra[0])
        return self._make(op, args)

    def build(self):
        if self.bank:
            return
        self.bank.append(self._leaf_terms())
        for size in range(1, self.cfg.max_insts + 1):
            if self.truncated:
                self.bank.append([])
                continue
            self.bank.append(self._build_level(size))

    # roots ---------------------------------------------------------------

    def _rooted(self, node: Node) -> Optional[Node]:
        if node.ty == self.root_ty:
            return node
        if node.ty.bits == self.root_ty.bits:
            return Op("bitcast", (node,), self.root_ty)
        return None

    def _hole_roots(self, t: Term, index: int) -> Iterator[tuple[Node, tuple]]:
        ty = t.node.ty
        h = Hole(ty, 0)
        k = (t.size, index)
        for op in ir.BINARY_OPS:
            yield make(op, [t.node, h]), (OPCODE_ORDER[op], k, 0)
            if op not in ir.COMMUTATIVE or not self.cfg.commutative_dedup:
                yield make(op, [h, t.node]), (OPCODE_ORDER[op], 0, k)
        for cond in ir.ICMP_CONDS:
            yield make("icmp", [t.node, h], cond=cond), (OPCODE_ORDER["icmp"], cond, k)
        for desc in intrinsics_over(ty):
            name = intrinsics.canonical_name(desc)
            if desc.is_shift:
                yield make("call", [t.node, Hole(Type(32), 0)], callee=name), (-1, name, k, 0)
            else:
                yield make("call", [t.node, h], callee=name), (-1, name, k, 0)
                yield make("call", [h, t.node], callee=name), (-1, name, 0, k)

    def candidates(self) -> list[Candidate]:
        """Every root candidate, sorted by (approx cost, size, tie-break)."""
        self.build()
        out: list[Candidate] = []
        seen: set = set()
        for size, level in enumerate(self.bank):
            for i, t in enumerate(level):
                # Root constants are left to the hole variants.
                if isinstance(t.node, Op) and any(isinstance(a, Const) for a in t.node.args) \
                        and t.node.op not in ("extractelement", "call"):
                    pass
                else:
                    node = self._rooted(t.node)
                    if node is not None and node not in seen:
                        seen.add(node)
                        out.append(Candidate(node, size, approx_cost(node), (size, t.key), t))
                if size + 1 > self.cfg.max_insts:
                    continue
                for node, key in self._hole_roots(t, i):
                    node = self._rooted(node)
                    if node is not None and node not in seen:
                        seen.add(node)
                        out.append(Candidate(node, size + 1, approx_cost(node), (size + 1, key)))
        out.sort(key=lambda c: (c.weight, c.size, _tiebreak(c.node), repr(c.key)))
        return out


def _tiebreak(node: Node) -> tuple:
    """Intrinsics first, then by opcode."""
    top = node.args[0] if isinstance(node, Op) and node.op == "bitcast" else node
    if not isinstance(top, Op):
        return (2, -1)
    return (0 if top.op == "call" else 1, OPCODE_ORDER.get(top.op, -1))


# ------------------------------------------------------------- synthesis

def enumerate_candidates(spec: Function, cfg: SynthConfig = SynthConfig()) -> list[Candidate]:
    return Enumerator(spec, cfg).candidates()


class Synthesizer:
    def __init__(self, spec: Function, cfg: SynthConfig = SynthConfig(), table: Optional[CostTable] = None,
                 verifier: Optional[Verifier] = None):
        self.spec = spec
        self.cfg = cfg
        self.table = table or load_cost_table(target=cfg.target)
        self.verifier = verifier or Verifier(spec, cfg.verify)
        self.stats = SynthStats()
        self.cost_before = uop_cost(spec, self.table)
        self._retained = _retained_costs(spec, self.table)

    def cost_of(self, node: Node) -> int:
        """uOps of ``node`` plus the slice instructions its leaves keep alive."""
        names = {v.name for v in vals(node)}
        keep: set = set()
        for n in names:
            keep |= self._retained[0].get(n, set())
        extra = sum(self._retained[1][n] for n in keep)
        if any(self.spec.definition(n).op == "phi" for n in keep):
            extra += self._retained[2]
        return uop_cost(node, self.table) + extra

    def run(self) -> Optional[RewriteRecord]:
        t0 = time.perf_counter()
        ret = None
        for b in self.spec.blocks:
            if b.term.kind == "ret":
                ret = b.term.args[0]
        if not isinstance(ret, Ref) or self.spec.definition(ret.name) is None:
            return None
        en = Enumerator(self.spec, self.cfg, self.verifier)
        cands = en.candidates()
        self.stats.terms = sum(len(l) for l in en.bank)
        best: Optional[RewriteRecord] = None
        bound = self.cost_before
        for cand in cands:
            if time.perf_counter() - t0 > self.cfg.timeout:
                self.stats.timed_out = True
                break
            self.stats.candidates += 1
            after = self.cost_of(cand.node)
            if after >= bound:
                self.stats.skipped_cost += 1
                continue
            if cand.has_holes:
                self.stats.cegis_calls += 1
                hit = self.verifier.synth_constants(cand.node)
                if hit is None:
                    continue
                from .rewrite import fill_holes

                node, verdict = fill_holes(cand.node, hit[0]), hit[1]
            else:
                if not self._probe_ok(en, cand):
                    continue
                self.stats.refine_calls += 1
                verdict = self.verifier.refine(cand.node)
                node = cand.node
            if verdict.status.proved:
                best = RewriteRecord(ret.name, node, self.cost_before, after, verdict, self.table.target)
                bound = after
        self.stats.elapsed = time.perf_counter() - t0
        return best

    def _probe_ok(self, en: Enumerator, cand: Candidate) -> bool:
        got, ub = eval_rewrite_batch(cand.node, {n: en.leaf_vals[n] for n in {v.name for v in vals(cand.node)}},
                                     rows=en.rows)
        lane_ok = en.spec_out.poison | (~got.poison & (en.spec_out.vals == got.vals))
        return bool((en.spec_ub | (~ub & lane_ok.all(axis=1))).all())


def _retained_costs(spec: Function, table: CostTable):
    """(value -> instructions it depends on, instruction -> uOps, branch uOps)."""
    from .cost import instruction_key

    deps: dict[str, set] = {}
    costs: dict[str, int] = {}
    for _, inst in spec.instructions():
        if inst.dest is None:
            continue
        op, ty, callee = instruction_key(inst)
        costs[inst.dest] = table.cost(op, ty, callee)
        d = {inst.dest}
        for a in inst.refs():
            d |= deps.get(a, set())
        deps[inst.dest] = d
    branches = sum(table.cost("br.cond") for b in spec.blocks if b.term.kind == "cbr")
    return deps, costs, branches


def synthesize(spec: Function, cfg: SynthConfig = SynthConfig(), table: Optional[CostTable] = None) -> Optional[RewriteRecord]:
    return Synthesizer(spec, cfg, table).run()
