"""Finite refinement checking and constant synthesis.

A candidate refines a slice when, on every input where the slice does not
hit undefined behaviour, the candidate does not either, and every non-poison
lane of the slice's result is reproduced exactly.  Inputs are enumerated
completely when the inputs that matter fit the exhaustive budget, and
sampled otherwise.  "The inputs that matter" are the bits found by the
dependence analysis in :mod:`vexor.support`: bits outside the support of both
sides cannot change the outcome, so they are pinned to zero.
"""

from __future__ import annotations

import enum
import itertools
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import reference
from .cfg import dominators
from .interp import Env, VectorValue, eval_rewrite_batch, run_function
from .ir import Function, Lit, Ref
from .kernels import U64, Batch, lane_mask
from .rewrite import Const, Hole, Node, Op, RewriteError, Val, fill_holes, holes, postorder, substitute, value_nodes
from .support import Layout, Support, popcount
from .types import Type

CHUNK_ROWS = 1 << 17
MIXED_STRUCTURED_ROWS = 256
MAX_PROPOSALS = 1 << 20


class Status(str, enum.Enum):
    PROVED_EXHAUSTIVE = "proved-exhaustive"
    PROVED_SAMPLED = "proved-sampled"
    REFUTED = "refuted"
    UNKNOWN = "unknown"

    def __str__(self):
        return self.value

    @property
    def proved(self) -> bool:
        return self in (Status.PROVED_EXHAUSTIVE, Status.PROVED_SAMPLED)


@dataclass(frozen=True)
class VerifyConfig:
    exhaustive_bits: int = 20
    samples: int = 100_000
    structured: bool = True
    seed: int = 0
    time_budget: float = 20.0
    poison_inputs: bool = False

    def __post_init__(self):
        if self.exhaustive_bits < 0 or self.samples < 0 or self.time_budget <= 0:
            raise ValueError("verification budgets must be positive")


@dataclass
class Verdict:
    status: Status
    inputs_checked: int
    counterexample: Optional[Env] = None
    free_bits: int = 0
    support_bits: int = 0
    elapsed: float = 0.0

    @property
    def proved(self) -> bool:
        return self.status.proved

    def __str__(self):
        return f"{self.status} ({self.inputs_checked} inputs)"


# ------------------------------------------------------------ structure

def leaf_values(spec: Function) -> list[str]:
    """Values a candidate may read: those available wherever the result is."""
    ret = None
    for b in spec.blocks:
        if b.term.kind == "ret":
            ret = b.term.args[0]
    names = [p for p, t in spec.params if t.is_int]
    if not isinstance(ret, Ref) or ret.name in names:
        return names
    dom = dominators(spec)
    vblock = spec.def_block(ret.name)
    for b in spec.blocks:
        if b.label != vblock and b.label not in dom[vblock]:
            continue
        for inst in b.insts:
            if inst.dest == ret.name:
                break
            if inst.dest is not None and inst.ty.is_int:
                names.append(inst.dest)
    return names


def spec_constants(spec: Function) -> dict[int, set]:
    """Literal lane values appearing in ``spec``, grouped by lane width."""
    types = spec.param_types()
    for _, inst in spec.instructions():
        if inst.dest is not None:
            types[inst.dest] = inst.ty
    out: dict[int, set] = {}
    from .ir import operand_types

    for _, inst in spec.instructions():
        if inst.op in ("gep", "load"):
            continue
        for a, t in zip(inst.args, operand_types(inst, types)):
            if isinstance(a, Lit) and t is not None:
                out.setdefault(t.width, set()).update(v & t.mask for v in a.lanes)
    return out


def structured_values(width: int, extra=()) -> list[int]:
    """The fixed per-lane set: 0, 1, 2, all-ones and neighbours, signed extremes,
    powers of two and their neighbours, then literals from the slice."""
    m = (1 << width) - 1
    vals = [0, 1, 2, m, m - 1, 1 << (width - 1), (1 << (width - 1)) - 1, (1 << (width - 1)) + 1]
    for k in range(1, width):
        vals += [(1 << k) - 1, 1 << k, (1 << k) + 1]
    vals += sorted(extra)
    return list(dict.fromkeys(v & m for v in vals))


# --------------------------------------------------------------- inputs

def _empty(params) -> dict[str, Batch]:
    return {p: Batch.zeros(t, 0) for p, t in params}


def _concat(a: dict[str, Batch], b: dict[str, Batch]) -> dict[str, Batch]:
    return {k: Batch(a[k].ty, np.concatenate([a[k].vals, b[k].vals]), np.concatenate([a[k].poison, b[k].poison]))
            for k in a}


def _take(batch: dict[str, Batch], rows) -> dict[str, Batch]:
    return {k: v.take(rows) for k, v in batch.items()}


def _rows(batch: dict[str, Batch]) -> int:
    return next(iter(batch.values())).rows if batch else 0


def structured_inputs(params, constants: dict[int, set], rng: np.random.Generator,
                      poison: bool = False) -> dict[str, Batch]:
    lists = {p: structured_values(t.width, constants.get(t.width, ())) for p, t in params}
    uniform = max((len(v) for v in lists.values()), default=1)
    n = uniform + MIXED_STRUCTURED_ROWS
    out = {}
    for p, t in params:
        vals = np.array(lists[p], dtype=U64)
        first = np.repeat(vals[np.arange(uniform) % len(vals)][:, None], t.lanes, axis=1)
        mixed = vals[rng.integers(0, len(vals), size=(MIXED_STRUCTURED_ROWS, t.lanes))]
        pz = np.zeros((n, t.lanes), dtype=bool)
        if poison:
            pz[uniform:] = rng.random((MIXED_STRUCTURED_ROWS, t.lanes)) < 0.25
        out[p] = Batch(t, np.concatenate([first, mixed]), pz)
    return out


def random_inputs(params, n: int, rng: np.random.Generator, poison: bool = False) -> dict[str, Batch]:
    out = {}
    for p, t in params:
        vals = rng.integers(0, 1 << 64, size=(n, t.lanes), dtype=np.uint64, endpoint=False) & lane_mask(t.width)
        pz = rng.random((n, t.lanes)) < 0.25 if poison else np.zeros((n, t.lanes), dtype=bool)
        out[p] = Batch(t, vals, pz)
    return out


def enumerated_inputs(params, positions: list[tuple[str, int, int]], start: int, stop: int,
                      poison_positions: Optional[list[tuple[str, int]]] = None) -> dict[str, Batch]:
    """Rows ``start..stop`` of the enumeration in which bit j of the row index
    drives input bit ``positions[j]`` (and, after those, poison flags)."""
    k = np.arange(start, stop, dtype=U64)
    out = {p: Batch.zeros(t, stop - start) for p, t in params}
    for j, (name, lane, bit) in enumerate(positions):
        out[name].vals[:, lane] |= ((k >> U64(j)) & U64(1)) << U64(bit)
    for j, (name, lane) in enumerate(poison_positions or (), start=len(positions)):
        out[name].poison[:, lane] = ((k >> U64(j)) & U64(1)).astype(bool)
    return out


# ------------------------------------------------------------ checking

def _refines(spec_ret: Batch, spec_ub, cand: Batch, cand_ub) -> np.ndarray:
    lane_ok = spec_ret.poison | (~cand.poison & (spec_ret.vals == cand.vals))
    return spec_ub | (~cand_ub & lane_ok.all(axis=1))


def _env_row(batch: dict[str, Batch], row: int) -> Env:
    return Env({k: VectorValue.from_batch(v, row) for k, v in batch.items()})


def check_input(spec: Function, cand: Node, env: Env) -> bool:
    """One input, evaluated with the naive reference evaluator."""
    if holes(cand):
        raise ValueError("check_input needs a hole-free candidate")
    args = {p: list(env.values[p].lanes) for p, t in spec.params if t.is_int}
    try:
        want = reference.eval_function(spec, args, {k: list(v.lanes) for k, v in env.memory.items()})
    except reference.RefTrap:
        return True
    # Intermediate leaves read by the candidate are recomputed on the spec.
    bindings = dict(args)
    types = {p: t for p, t in spec.params}
    inner = {v.name for v in postorder(cand) if isinstance(v, Val)} - set(bindings)
    if inner:
        for name in inner:
            probe = _retarget(spec, name)
            bindings[name] = reference.eval_function(probe, args)
            types[name] = spec.value_type(name)
    try:
        got = reference.eval_rewrite(cand, bindings, types)
    except reference.RefTrap:
        return False
    return all(w is None or (g is not None and g == w) for w, g in zip(want, got))


def _retarget(spec: Function, name: str) -> Function:
    """``spec`` returning ``name`` instead, cut right after its definition."""
    from .ir import Block, Terminator

    label = spec.def_block(name)
    blocks = []
    for b in spec.blocks:
        if b.label == label:
            k = next(i for i, inst in enumerate(b.insts) if inst.dest == name)
            blocks.append(Block(b.label, b.insts[:k + 1], Terminator("ret", (Ref(name),))))
        else:
            blocks.append(b)
    # Blocks after the cut may now be unreachable; they are never executed.
    return Function(spec.name, spec.params, spec.value_type(name), tuple(blocks))


class Verifier:
    """Refinement queries against one slice, with cached spec evaluations."""

    def __init__(self, spec: Function, cfg: VerifyConfig = VerifyConfig()):
        self.spec = spec
        self.cfg = cfg
        self.params = [(p, t) for p, t in spec.params if t.is_int]
        if len(self.params) != len(spec.params):
            raise ValueError("slices take integer parameters only")
        self.layout = Layout.of(self.params)
        self.free_bits = self.layout.total_bits + (sum(t.lanes for _, t in self.params) if cfg.poison_inputs else 0)
        self.leaves = leaf_values(spec)
        self.leaf_types = {n: spec.value_type(n) for n in self.leaves}
        self.constants = spec_constants(spec)
        try:
            self.nodes = value_nodes(spec) if not cfg.poison_inputs else None
        except RewriteError:
            self.nodes = None
        self._spec_support = None
        ret = None
        for b in spec.blocks:
            if b.term.kind == "ret":
                ret = b.term.args[0]
        self._ret = ret
        rng = np.random.default_rng(cfg.seed)
        self.structured = structured_inputs(self.params, self.constants, rng, cfg.poison_inputs)
        self._structured_eval = None
        self._samples = None
        self._samples_eval = None
        self.cex = _empty(self.params)
        self._cex_eval = None
        self.queries = 0

    # evaluation ----------------------------------------------------------

    def evaluate_spec(self, inputs: dict[str, Batch]):
        """(result, ub rows, leaf values) of the spec on a batch of inputs."""
        if inputs and _rows(inputs) == 0:
            return Batch.zeros(self.spec.ret_ty, 0), np.zeros(0, dtype=bool), {n: Batch.zeros(t, 0) for n, t in self.leaf_types.items()}
        res = run_function(self.spec, inputs)
        leaves = {n: (inputs[n] if n in inputs else res.values[n]) for n in self.leaves}
        return res.ret, res.trapped, leaves

    def _cand_inputs(self, cand: Node, leaves: dict[str, Batch]) -> dict[str, Batch]:
        out = {}
        for v in postorder(cand):
            if isinstance(v, Val):
                if v.name not in leaves:
                    raise ValueError(f"candidate reads %{v.name}, which is not available at the slice result")
                out[v.name] = leaves[v.name]
        return out

    def _check(self, cand: Node, inputs, evaluated=None) -> np.ndarray:
        spec_ret, spec_ub, leaves = evaluated if evaluated is not None else self.evaluate_spec(inputs)
        if spec_ret.rows == 0:
            return np.zeros(0, dtype=bool)
        got, ub = eval_rewrite_batch(cand, self._cand_inputs(cand, leaves), rows=spec_ret.rows)
        return _refines(spec_ret, spec_ub, got, ub)

    def _cached(self, which: str):
        if which == "structured":
            if self._structured_eval is None:
                self._structured_eval = self.evaluate_spec(self.structured)
            return self.structured, self._structured_eval
        if which == "samples":
            if self._samples is None:
                rng = np.random.default_rng([self.cfg.seed, 1])
                self._samples = random_inputs(self.params, self.cfg.samples, rng, self.cfg.poison_inputs)
                self._samples_eval = self.evaluate_spec(self._samples)
            return self._samples, self._samples_eval
        if self._cex_eval is None or self._cex_eval[0].rows != _rows(self.cex):
            self._cex_eval = self.evaluate_spec(self.cex)
        return self.cex, self._cex_eval

    def _add_cex(self, inputs, row):
        one = _take(inputs, [row])
        if _rows(self.cex) < 4096:
            self.cex = _concat(self.cex, one)
        self._cex_eval = None

    # support ------------------------------------------------------------

    def support_positions(self, cand: Node) -> Optional[list[tuple[str, int, int]]]:
        """Input bits either side may depend on, or None when no analysis applies."""
        if self.nodes is None or not isinstance(self._ret, (Ref, Lit)):
            return None
        if self._spec_support is None:
            root = self.nodes[self._ret.name] if isinstance(self._ret, Ref) else Const(self.spec.ret_ty, self._ret.lanes)
            self._spec_support = Support(root, self.layout).all
        mapping = {}
        for v in postorder(cand):
            if isinstance(v, Val) and v.name in self.nodes:
                node = self.nodes[v.name]
                if node.ty != v.ty:
                    node = Op("bitcast", (node,), v.ty)
                mapping[v] = node
        bits = self._spec_support | Support(substitute(cand, mapping), self.layout).all
        out = []
        k = 0
        while bits:
            if bits & 1:
                out.append(self.layout.locate(k))
            bits >>= 1
            k += 1
        return out

    # queries ------------------------------------------------------------

    def refine(self, cand: Node) -> Verdict:
        if holes(cand):
            raise ValueError("refine needs a hole-free candidate")
        self.queries += 1
        t0 = time.perf_counter()
        deadline = t0 + self.cfg.time_budget

        def done(status, n, inputs=None, row=None, support=0):
            cex = None
            if status is Status.REFUTED:
                cex = _env_row(inputs, row)
                self._add_cex(inputs, row)
            return Verdict(status, n, cex, self.free_bits, support, time.perf_counter() - t0)

        # Cheap refutations first: inputs that broke earlier candidates.
        for which in ("cex", "structured"):
            if which == "structured" and not self.cfg.structured:
                continue
            inputs, ev = self._cached(which)
            ok = self._check(cand, inputs, ev)
            if not ok.all():
                return done(Status.REFUTED, int(np.argmin(ok)) + 1, inputs, int(np.argmin(ok)))

        positions = self.support_positions(cand) if not self.cfg.poison_inputs else None
        if positions is not None:
            bits, poison_pos = len(positions), None
        else:
            positions = [self.layout.locate(k) for k in range(self.layout.total_bits)]
            poison_pos = [(p, l) for p, t in self.params for l in range(t.lanes)] if self.cfg.poison_inputs else None
            bits = self.free_bits
        if bits <= self.cfg.exhaustive_bits:
            total = 1 << bits
            for start in range(0, total, CHUNK_ROWS):
                if time.perf_counter() > deadline:
                    return done(Status.UNKNOWN, start, support=bits)
                inputs = enumerated_inputs(self.params, positions, start, min(total, start + CHUNK_ROWS), poison_pos)
                ok = self._check(cand, inputs)
                if not ok.all():
                    return done(Status.REFUTED, start, inputs, int(np.argmin(ok)), bits)
            return done(Status.PROVED_EXHAUSTIVE, total, support=bits)

        inputs, ev = self._cached("samples")
        n_struct = _rows(self.structured) if self.cfg.structured else 0
        if time.perf_counter() > deadline:
            return done(Status.UNKNOWN, n_struct, support=bits)
        ok = self._check(cand, inputs, ev)
        if not ok.all():
            return done(Status.REFUTED, n_struct, inputs, int(np.argmin(ok)), bits)
        return done(Status.PROVED_SAMPLED, n_struct + self.cfg.samples, support=bits)

    def hole_domains(self, cand: Node) -> Optional[list[np.ndarray]]:
        """Candidate lane tuples per hole, as (P_i, lanes) arrays, or None if too large."""
        hs = holes(cand)
        amounts = _shift_amount_holes(cand)
        free = [h for h in hs if h.index not in amounts]
        exhaustive = sum(h.ty.bits for h in free) <= 16
        doms = []
        for h in hs:
            if h.index in amounts:
                top = amounts[h.index]
                doms.append(np.repeat(np.arange(top + 1, dtype=U64)[:, None], h.ty.lanes, axis=1))
            elif exhaustive:
                doms.append(_all_vectors(h.ty))
            else:
                doms.append(_pool(h.ty, self.constants, self.spec))
        size = 1
        for d in doms:
            size *= len(d)
        return doms if size <= MAX_PROPOSALS else None

    def synth_constants(self, cand: Node) -> Optional[tuple[dict[int, tuple[int, ...]], Verdict]]:
        """CEGIS over the hole domains; returns the assignment and its verdict."""
        hs = holes(cand)
        if not hs:
            raise ValueError("synth_constants needs a candidate with holes")
        t0 = time.perf_counter()
        doms = self.hole_domains(cand)
        if doms is None:
            return None
        # Proposals in lexicographic domain order, filtered lazily.
        sizes = [len(d) for d in doms]
        total = int(np.prod(sizes))
        alive = np.ones(total, dtype=bool)

        def proposal_lanes(idx: np.ndarray) -> dict[int, Batch]:
            out = {}
            rest = idx.copy()
            for h, d, s in reversed(list(zip(hs, doms, sizes))):
                out[h.index] = Batch(h.ty, d[rest % s], np.zeros((len(idx), h.ty.lanes), dtype=bool))
                rest //= s
            return out

        def filter_with(inputs, ev):
            # Rows go in growing groups so a large domain shrinks on a few
            # rows before the survivors meet the rest.
            n = _rows(inputs)
            lo, size = 0, 1
            while lo < n:
                rows = np.arange(lo, min(n, lo + size))
                spec_ret, spec_ub, leaves = ev
                filter_rows(Batch(spec_ret.ty, spec_ret.vals[rows], spec_ret.poison[rows]), spec_ub[rows],
                            {k: Batch(b.ty, b.vals[rows], b.poison[rows]) for k, b in leaves.items()})
                lo, size = lo + size, size * 4

        def filter_rows(spec_ret, spec_ub, leaves):
            m = spec_ret.rows
            if m == 0:
                return
            cin = self._cand_inputs(cand, leaves)
            idx_all = np.flatnonzero(alive)
            step = max(1, CHUNK_ROWS // m)
            for s in range(0, len(idx_all), step):
                idx = idx_all[s:s + step]
                p = len(idx)
                hv = {k: Batch(b.ty, np.repeat(b.vals, m, axis=0), np.repeat(b.poison, m, axis=0))
                      for k, b in proposal_lanes(idx).items()}
                tiled = {k: Batch(b.ty, np.tile(b.vals, (p, 1)), np.tile(b.poison, (p, 1))) for k, b in cin.items()}
                got, ub = eval_rewrite_batch(cand, tiled, hv, rows=p * m)
                sr = Batch(spec_ret.ty, np.tile(spec_ret.vals, (p, 1)), np.tile(spec_ret.poison, (p, 1)))
                ok = _refines(sr, np.tile(spec_ub, p), got, ub).reshape(p, m).all(axis=1)
                alive[idx[~ok]] = False

        filter_with(*self._cached("cex"))
        if self.cfg.structured:
            filter_with(*self._cached("structured"))
        while True:
            if time.perf_counter() - t0 > self.cfg.time_budget:
                return None
            live = np.flatnonzero(alive)
            if len(live) == 0:
                return None
            pick = live[:1]
            lanes = proposal_lanes(pick)
            assignment = {k: tuple(int(x) for x in b.vals[0]) for k, b in lanes.items()}
            filled = fill_holes(cand, assignment)
            verdict = self.refine(filled)
            if verdict.status is not Status.REFUTED:
                if verdict.status is Status.UNKNOWN:
                    return None
                return assignment, verdict
            alive[pick] = False
            one = _take(self.cex, [_rows(self.cex) - 1]) if _rows(self.cex) else None
            if one is not None:
                filter_with(one, self.evaluate_spec(one))


def _shift_amount_holes(cand: Node) -> dict[int, int]:
    """Holes used as shift amounts -> largest amount worth trying.

    IR shifts by the lane width or more give poison, so amounts 0..w-1 cover
    every distinct behaviour; immediate shifts saturate, so 0..w do.
    """
    from .intrinsics import lookup

    out = {}
    for n in postorder(cand):
        if not isinstance(n, Op):
            continue
        if n.op in ("shl", "lshr", "ashr") and isinstance(n.args[1], Hole):
            out[n.args[1].index] = n.ty.width - 1
        elif n.op == "call" and isinstance(n.args[1], Hole) and lookup(n.callee).is_shift:
            out[n.args[1].index] = lookup(n.callee).width
    return out


def _all_vectors(ty: Type) -> np.ndarray:
    k = np.arange(1 << ty.bits, dtype=U64)
    w = ty.width
    return np.stack([(k >> U64(i * w)) & lane_mask(w) for i in range(ty.lanes)], axis=1)


def _pool(ty: Type, constants: dict[int, set], spec: Function) -> np.ndarray:
    """0, +-1, +-2^k, 2^k - 1, lane masks and slice literals, as splats, then
    whole-vector literals of the slice with the hole's type."""
    w = ty.width
    m = (1 << w) - 1
    scalars = [0, 1, m]
    for k in range(1, w):
        scalars += [1 << k, (-(1 << k)) & m, (1 << k) - 1]
    scalars += sorted(constants.get(w, ()))
    rows = [(v & m,) * ty.lanes for v in dict.fromkeys(scalars)]
    for _, inst in spec.instructions():
        for a in inst.args:
            if isinstance(a, Lit) and len(a.lanes) == ty.lanes:
                rows.append(tuple(v & m for v in a.lanes))
    rows = list(dict.fromkeys(rows))
    return np.array(rows, dtype=U64).reshape(len(rows), ty.lanes)


# ------------------------------------------------------- module functions

def refine(spec: Function, cand: Node, cfg: VerifyConfig = VerifyConfig()) -> Verdict:
    return Verifier(spec, cfg).refine(cand)


def synth_constants(spec: Function, cand: Node, cfg: VerifyConfig = VerifyConfig()):
    """Assignment of hole index -> lane tuple, or None."""
    hit = Verifier(spec, cfg).synth_constants(cand)
    return None if hit is None else hit[0]
