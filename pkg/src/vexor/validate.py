"""Static checks: CFG shape, SSA dominance and operation signatures."""

from __future__ import annotations

from dataclasses import dataclass

from . import ir
from .cfg import dominators, reverse_postorder
from .ir import Function, Lit, Ref
from .rewrite import Const, RewriteError, Val, result_type
from .types import PTR, Type, int_type


@dataclass(frozen=True)
class Diagnostic:
    rule: str  # "cfg", "ssa" or "type"
    value: str
    location: str
    message: str

    def __str__(self):
        return f"{self.rule} error at {self.location} ({self.value}): {self.message}"


def validate(f: Function) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def err(rule, value, loc, msg):
        diags.append(Diagnostic(rule, value, loc, msg))

    labels = [b.label for b in f.blocks]
    if len(set(labels)) != len(labels):
        dup = sorted({l for l in labels if labels.count(l) > 1})
        err("cfg", dup[0], f"@{f.name}", "duplicate block label")
        return diags
    for b in f.blocks:
        for t in b.term.targets:
            if t not in labels:
                err("cfg", t, b.label, "branch to unknown block")
    if diags:
        return diags
    preds = f.predecessors()
    if preds[f.entry.label]:
        err("cfg", f.entry.label, f.entry.label, "entry block has predecessors")
    live = set(reverse_postorder(f))
    for b in f.blocks:
        if b.label not in live:
            err("cfg", b.label, b.label, "unreachable block")
    if diags:
        return diags
    if not f.ret_ty.is_int:
        err("type", "ret", f"@{f.name}", "functions return integer or integer-vector values")

    # Definitions.
    types: dict[str, Type] = {}
    where: dict[str, tuple[str, int]] = {}
    for p, t in f.params:
        if p in types:
            err("ssa", f"%{p}", f"@{f.name}", "parameter defined twice")
        types[p] = t
        where[p] = (f.entry.label, -1)
    for b in f.blocks:
        for k, inst in enumerate(b.insts):
            if inst.dest is None:
                continue
            if inst.dest in types:
                err("ssa", f"%{inst.dest}", b.label, "value defined more than once")
            types[inst.dest] = inst.ty
            where[inst.dest] = (b.label, k)

    dom = dominators(f)

    def dominates(name: str, use_block: str, use_index: int) -> bool:
        db, di = where[name]
        if db == use_block:
            return di < use_index
        return db in dom[use_block]

    for b in f.blocks:
        seen_non_phi = False
        for k, inst in enumerate(b.insts):
            loc = f"{b.label}:{k}"
            label = f"%{inst.dest}" if inst.dest else inst.op
            if inst.op == "phi":
                if seen_non_phi:
                    err("cfg", label, loc, "phi after a non-phi instruction")
                inc = list(inst.incoming or ())
                if sorted(inc) != sorted(preds[b.label]) or len(set(inc)) != len(inc):
                    err("cfg", label, loc, f"phi incoming blocks {inc} do not match predecessors {preds[b.label]}")
                if not inst.ty.is_int:
                    err("type", label, loc, "phi must be integer typed")
                for a, src in zip(inst.args, inc):
                    if isinstance(a, Ref):
                        if a.name not in types:
                            err("ssa", f"%{a.name}", loc, "use of undefined value")
                        elif src in dom and not dominates(a.name, src, len(f.block(src).insts)):
                            err("ssa", f"%{a.name}", loc, f"incoming value does not dominate the end of {src}")
                        elif types[a.name] != inst.ty:
                            err("type", f"%{a.name}", loc, f"phi operand type {types[a.name]} is not {inst.ty}")
                continue
            seen_non_phi = True
            _check_operands(f, inst, types, loc, label, err, lambda n: dominates(n, b.label, k))
        t = b.term
        loc = f"{b.label}:term"
        for a in t.args:
            if isinstance(a, Ref):
                if a.name not in types:
                    err("ssa", f"%{a.name}", loc, "use of undefined value")
                elif not dominates(a.name, b.label, len(b.insts)):
                    err("ssa", f"%{a.name}", loc, "use is not dominated by its definition")
        if t.kind == "ret":
            ty = _operand_type(t.args[0], types, f.ret_ty)
            if ty is not None and ty != f.ret_ty:
                err("type", "ret", loc, f"returns {ty}, function returns {f.ret_ty}")
        elif t.kind == "cbr":
            ty = _operand_type(t.args[0], types, int_type(1))
            if ty is not None and ty != int_type(1):
                err("type", "br", loc, f"branch condition has type {ty}, expected i1")
    return diags


def _operand_type(a, types, expected):
    """Type of a terminator operand; literals take the expected type when they fit."""
    if isinstance(a, Ref):
        return types.get(a.name)
    if len(a.lanes) == expected.lanes and all(0 <= v <= expected.mask for v in a.lanes):
        return expected
    return "malformed literal"


def _check_operands(f, inst, types, loc, label, err, dominated):
    op = inst.op
    for a in inst.args:
        if isinstance(a, Ref):
            if a.name not in types:
                err("ssa", f"%{a.name}", loc, "use of undefined value")
                return
            if not dominated(a.name):
                err("ssa", f"%{a.name}", loc, "use is not dominated by its definition")
                return
    if op == "load":
        if types[inst.args[0].name] != PTR:
            err("type", label, loc, "load needs a pointer operand")
        if not inst.ty.is_int:
            err("type", label, loc, "loads produce integer values")
        return
    if op == "store":
        if types[inst.args[1].name] != PTR:
            err("type", label, loc, "store needs a pointer operand")
        if types[inst.args[0].name] != inst.ty or not inst.ty.is_int:
            err("type", label, loc, "stored value type mismatch")
        return
    if op == "gep":
        if not isinstance(inst.args[0], Ref) or types[inst.args[0].name] != PTR:
            err("type", label, loc, "gep needs a pointer base")
        return
    try:
        expected = ir.operand_types(inst, types)
    except (ValueError, KeyError) as e:
        err("type", label, loc, str(e))
        return
    if len(expected) != len(inst.args):
        err("type", label, loc, f"{op} takes {len(expected)} operands, got {len(inst.args)}")
        return
    nodes = []
    for a, t in zip(inst.args, expected):
        if isinstance(a, Ref):
            ty = types[a.name]
            if not ty.is_int:
                err("type", label, loc, "pointer used as an integer")
                return
            nodes.append(Val(ty, a.name))
        else:
            if t is None or len(a.lanes) != t.lanes or any(not 0 <= v <= t.mask for v in a.lanes):
                err("type", label, loc, "malformed literal operand")
                return
            nodes.append(Const(t, a.lanes))
    try:
        rty = result_type(op, nodes, inst.ty, inst.cond, inst.mask, inst.callee)
    except RewriteError as e:
        err("type", label, loc, str(e))
        return
    if rty != inst.ty:
        err("type", label, loc, f"result type {inst.ty} should be {rty}")
