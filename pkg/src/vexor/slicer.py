"""Backward slicing of one SSA value into a loop-free function.

The worklist is processed breadth first, so every value is reached at its
shortest distance from the target; this keeps the harvested set monotone
in the depth limit.  Values that cannot be harvested (beyond the depth,
outside the target's loop, loop-carried phis, give-up loads) become
parameters of the slice.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Union

from .cfg import backedges, dominators, innermost_loop, natural_loops
from .ir import Block, Function, Instruction, Lit, Ref, Terminator

DEFAULT_DEPTH = 5


class SliceError(ValueError):
    pass


@dataclass(frozen=True)
class Slice:
    function: Function
    target: str
    binding: dict  # slice parameter -> original value
    depth: int
    harvested: frozenset
    unknown: frozenset

    @property
    def params(self) -> list[str]:
        return [p for p, _ in self.function.params]


@dataclass(frozen=True)
class Forwarded:
    value: Union[Ref, Lit]
    store_block: str


@dataclass(frozen=True)
class GiveUp:
    reason: str


def resolve_load(f: Function, load: str) -> Union[Forwarded, GiveUp]:
    """Walk backward from ``load`` along unique predecessors to find its store."""
    inst = f.definition(load)
    if inst is None or inst.op != "load":
        raise SliceError(f"%{load} is not a load")
    ptr = inst.args[0].name
    preds = f.predecessors()
    cur = f.block(f.def_block(load))
    pos = next(k for k, i in enumerate(cur.insts) if i.dest == load)
    visited = set()
    while True:
        for i in reversed(cur.insts[:pos]):
            if i.op == "store":
                if i.args[1].name == ptr and i.ty == inst.ty:
                    return Forwarded(i.args[0], cur.label)
                return GiveUp(f"intervening store to %{i.args[1].name}")
            if i.op == "call":
                return GiveUp("intervening call")
        visited.add(cur.label)
        ps = preds[cur.label]
        if len(ps) > 1:
            return GiveUp(f"block {cur.label} merges memory states")
        if not ps:
            return GiveUp("no dominating store")
        if ps[0] in visited:
            return GiveUp("memory walk cycles")
        cur = f.block(ps[0])
        pos = len(cur.insts)


def _slice_name(name: str) -> str:
    return name if name.endswith(".slice") else name + ".slice"


def extract_slice(f: Function, v: str, depth: int = DEFAULT_DEPTH) -> Slice:
    if depth < 1:
        raise SliceError("depth must be at least 1")
    target = f.definition(v)
    if target is None:
        if v in f.param_types():
            raise SliceError(f"%{v} is a parameter; there is nothing to slice")
        raise SliceError(f"%{v} is not defined in @{f.name}")
    if not target.ty.is_int:
        raise SliceError(f"%{v} is not integer typed")

    dom = dominators(f)
    back = set(backedges(f, dom))
    loops = natural_loops(f, dom)
    vblock = f.def_block(v)
    vloop = innermost_loop(vblock, loops)
    params = f.param_types()
    succ = {b.label: [t for t in b.term.targets if (b.label, t) not in back] for b in f.blocks}
    preds_dag: dict[str, set] = {b.label: set() for b in f.blocks}
    for b, ts in succ.items():
        for t in ts:
            preds_dag[t].add(b)

    def ancestors(label: str) -> set:
        seen, stack = set(), [label]
        while stack:
            b = stack.pop()
            for p in preds_dag[b]:
                if p not in seen and (vloop is None or p in vloop):
                    seen.add(p)
                    stack.append(p)
        return seen

    def loop_carried(inst: Instruction, block: str) -> bool:
        return inst.op == "phi" and any((p, block) in back for p in inst.incoming)

    harvested: dict[str, int] = {}
    unknown: set = set()
    forwarded: dict[str, Union[Ref, Lit]] = {}
    used_params: set = set()
    seen = {v}
    queue = deque([(v, 0)])

    def push(name, d):
        if name not in seen:
            seen.add(name)
            queue.append((name, d))

    def push_condition(block: str, d: int):
        if block == vblock:
            return
        t = f.block(block).term
        if t.kind == "cbr" and isinstance(t.args[0], Ref):
            push(t.args[0].name, d)

    while queue:
        name, d = queue.popleft()
        if name in params:
            used_params.add(name)
            continue
        inst = f.definition(name)
        block = f.def_block(name)
        if name == v:
            if loop_carried(inst, block):
                raise SliceError(f"%{v} is a loop-carried phi")
        elif (d >= depth or inst.op in ("store", "gep") or not inst.ty.is_int
              or (vloop is not None and block not in vloop) or loop_carried(inst, block)):
            unknown.add(name)
            continue
        if inst.op == "load":
            res = resolve_load(f, name)
            if isinstance(res, GiveUp):
                if name == v:
                    raise SliceError(f"%{v} is a load that cannot be resolved ({res.reason})")
                unknown.add(name)
                continue
            forwarded[name] = res.value
            harvested[name] = d
            if isinstance(res.value, Ref):
                push(res.value.name, d + 1)
            continue
        harvested[name] = d
        for a in inst.refs():
            push(a, d + 1)
        push_condition(block, d + 1)
        if inst.op == "phi":
            # The arm a phi selects depends on every branch leading to it.
            for anc in sorted(ancestors(block)):
                push_condition(anc, d + 1)

    # Region: blocks on a branch-free-of-backedges path from the entry to vblock.
    entry = f.entry.label
    if vloop is not None:
        entry = next(h for h, body in loops.items() if body == vloop)
    fn = _build(f, v, vblock, entry, vloop, succ, harvested, unknown, forwarded, used_params)
    binding = {p: p for p, _ in fn.params}
    return Slice(fn, v, binding, depth, frozenset(harvested), frozenset(unknown))


def _build(f, v, vblock, entry, vloop, succ, harvested, unknown, forwarded, used_params) -> Function:
    in_scope = {b.label for b in f.blocks if vloop is None or b.label in vloop}

    def reach_from(start, edges):
        seen, stack = {start}, [start]
        while stack:
            b = stack.pop()
            for t in edges.get(b, ()):
                if t in in_scope and t not in seen:
                    seen.add(t)
                    stack.append(t)
        return seen

    edges = {b: [t for t in ts if t in in_scope] for b, ts in succ.items() if b in in_scope}
    edges[vblock] = []
    available = set(harvested) | unknown | used_params

    term_of: dict[str, Terminator] = {}
    while True:
        fwd = reach_from(entry, edges)
        rev_edges: dict[str, list] = {}
        for b, ts in edges.items():
            for t in ts:
                rev_edges.setdefault(t, []).append(b)
        bwd = reach_from(vblock, rev_edges)
        keep = fwd & bwd
        changed = False
        for b in keep:
            if b == vblock:
                continue
            ts = list(dict.fromkeys(t for t in edges[b] if t in keep))
            t = f.block(b).term
            cond_ok = t.kind == "cbr" and (not isinstance(t.args[0], Ref) or t.args[0].name in available)
            if len(ts) == 2 and cond_ok:
                term_of[b] = Terminator("cbr", t.args, tuple(ts))
            else:
                # Only one way on toward the target, or the condition was
                # never needed: the branch becomes unconditional.
                ts = ts[:1]
                term_of[b] = Terminator("br", (), tuple(ts))
            if edges[b] != ts:
                edges[b] = ts
                changed = True
        if not changed:
            break

    for name in harvested:
        if name not in forwarded and f.def_block(name) not in keep:
            raise SliceError(f"internal: harvested %{name} lies outside the slice region")

    # Per-block predecessors in the slice, for trimming phi arms.
    slice_preds: dict[str, set] = {b: set() for b in keep}
    for b in keep:
        if b != vblock:
            for t in term_of[b].targets:
                slice_preds[t].add(b)

    subst: dict[str, Union[Ref, Lit]] = dict(forwarded)
    blocks_insts: dict[str, list] = {}
    for blk in f.blocks:
        if blk.label not in keep:
            continue
        out = []
        for inst in blk.insts:
            if inst.dest not in harvested or inst.dest in forwarded:
                if inst.dest == v:
                    break
                continue
            if inst.op == "phi":
                arms = [(a, lab) for a, lab in zip(inst.args, inst.incoming) if lab in slice_preds[blk.label]]
                if len(arms) == 1:
                    subst[inst.dest] = arms[0][0]
                    if inst.dest == v:
                        break
                    continue
                inst = Instruction(inst.dest, "phi", tuple(a for a, _ in arms), inst.ty,
                                   incoming=tuple(lab for _, lab in arms))
            out.append(inst)
            if inst.dest == v:
                break
        blocks_insts[blk.label] = out

    def resolve(a):
        seen = set()
        while isinstance(a, Ref) and a.name in subst and a.name not in seen:
            seen.add(a.name)
            a = subst[a.name]
        return a

    def fix_inst(inst):
        return inst.with_args(resolve(a) for a in inst.args)

    order = [entry] + [b.label for b in f.blocks if b.label in keep and b.label != entry]
    blocks = []
    for label in order:
        insts = [fix_inst(i) for i in blocks_insts[label]]
        if label == vblock:
            term = Terminator("ret", (resolve(Ref(v)),))
        else:
            t = term_of[label]
            term = Terminator(t.kind, tuple(resolve(a) for a in t.args), t.targets)
        blocks.append(Block(label, tuple(insts), term))

    blocks = _dce(blocks)
    used = set()
    for b in blocks:
        for i in b.insts:
            used.update(i.refs())
        used.update(b.term.refs())
    defined = {i.dest for b in blocks for i in b.insts}
    ptypes = f.param_types()
    new_params = [(p, t) for p, t in f.params if p in used and p not in defined]
    extra = []
    for label, inst in f.instructions():
        if inst.dest in used and inst.dest not in defined and inst.dest not in ptypes:
            extra.append((inst.dest, inst.ty))
    return Function(_slice_name(f.name), tuple(new_params + extra), f.value_type(v), tuple(blocks))


def _dce(blocks: list[Block]) -> list[Block]:
    while True:
        used = set()
        for b in blocks:
            for i in b.insts:
                used.update(i.refs())
            used.update(b.term.refs())
        out, changed = [], False
        for b in blocks:
            keep = tuple(i for i in b.insts if i.dest in used)
            if len(keep) != len(b.insts):
                changed = True
            out.append(Block(b.label, keep, b.term))
        blocks = out
        if not changed:
            return blocks
