"""Control-flow graph utilities: orderings, dominators and natural loops."""

from __future__ import annotations

from .ir import Function


def reverse_postorder(f: Function) -> list[str]:
    succ = f.successors()
    seen, post = set(), []
    stack = [(f.entry.label, iter(succ[f.entry.label]))]
    seen.add(f.entry.label)
    while stack:
        node, it = stack[-1]
        for nxt in it:
            if nxt not in seen and nxt in succ:
                seen.add(nxt)
                stack.append((nxt, iter(succ[nxt])))
                break
        else:
            stack.pop()
            post.append(node)
    return post[::-1]


def reachable(f: Function) -> set[str]:
    return set(reverse_postorder(f))


def dominators(f: Function) -> dict[str, set[str]]:
    """Map each reachable block to the set of blocks dominating it."""
    order = reverse_postorder(f)
    preds = f.predecessors()
    live = set(order)
    entry = order[0]
    dom = {b: set(order) for b in order}
    dom[entry] = {entry}
    changed = True
    while changed:
        changed = False
        for b in order[1:]:
            ps = [p for p in preds[b] if p in live]
            new = set.intersection(*(dom[p] for p in ps)) if ps else set()
            new = new | {b}
            if new != dom[b]:
                dom[b] = new
                changed = True
    return dom


def backedges(f: Function, dom: dict[str, set[str]] | None = None) -> list[tuple[str, str]]:
    """Edges ``(tail, head)`` whose head dominates the tail."""
    dom = dom if dom is not None else dominators(f)
    out = []
    for b in reverse_postorder(f):
        for t in f.block(b).term.targets:
            if t in dom.get(b, ()):
                out.append((b, t))
    return out


def retreating_edges(f: Function) -> list[tuple[str, str]]:
    """Edges into a block already on the DFS stack (covers irreducible cycles too)."""
    succ = f.successors()
    on_stack, done, out = set(), set(), []

    def dfs(b):
        on_stack.add(b)
        for t in succ[b]:
            if t in on_stack:
                out.append((b, t))
            elif t not in done:
                dfs(t)
        on_stack.discard(b)
        done.add(b)

    dfs(f.entry.label)
    return out


def natural_loops(f: Function, dom: dict[str, set[str]] | None = None) -> dict[str, set[str]]:
    """Header -> body blocks (header included), merging loops sharing a header."""
    dom = dom if dom is not None else dominators(f)
    preds = f.predecessors()
    loops: dict[str, set[str]] = {}
    for tail, head in backedges(f, dom):
        body = loops.setdefault(head, {head})
        stack = [tail]
        while stack:
            b = stack.pop()
            if b in body:
                continue
            body.add(b)
            stack.extend(p for p in preds[b] if p in dom)
    return loops


def innermost_loop(block: str, loops: dict[str, set[str]]) -> set[str] | None:
    best = None
    for body in loops.values():
        if block in body and (best is None or len(body) < len(best)):
            best = body
    return best


def is_acyclic(f: Function) -> bool:
    """Topological-sort check over reachable blocks."""
    succ = f.successors()
    live = reachable(f)
    indeg = {b: 0 for b in live}
    for b in live:
        for t in succ[b]:
            if t in live:
                indeg[t] += 1
    ready = [b for b, d in indeg.items() if d == 0]
    count = 0
    while ready:
        b = ready.pop()
        count += 1
        for t in succ[b]:
            if t in live:
                indeg[t] -= 1
                if indeg[t] == 0:
                    ready.append(t)
    return count == len(live)
