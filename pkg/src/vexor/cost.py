"""Two cost measures: a static ordering weight and a per-target uOp estimate.

uOp tables are text files with lines ``<target> <descriptor> <uops>``.  A
descriptor is an opcode plus a shape (``add.v8i32``, ``icmp.v8i8``), an
intrinsic name (``sse2.pavg.b``), a bare opcode (``mul``) or ``default``.
Lookup tries, in order: the exact descriptor, the element wildcard
(``lshr.*i8``, vectors only), the bare opcode, the table default.

Shapes are the result type, except ``icmp`` which is keyed by its operand
type.  ``phi`` and conditional branches (``br.cond``) have entries too;
``ret``, ``br`` and ``bitcast`` cost nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Union

from . import intrinsics
from .ir import Function, Instruction
from .rewrite import Node, Op, inst_nodes
from .types import Type

TARGETS = ("cascade", "zen3")
FREE = frozenset(("bitcast", "ret", "br"))


class CostTableError(ValueError):
    def __init__(self, msg: str, line: int = 0):
        super().__init__(f"line {line}: {msg}" if line else msg)
        self.line = line


@dataclass(frozen=True)
class CostTable:
    target: str
    entries: dict = field(default_factory=dict)
    default: int = 1

    def lookup(self, op: str, ty: Type | None = None, callee: str | None = None) -> tuple[int, bool]:
        """(uops, hit) where ``hit`` is False when the table default applied."""
        if op in FREE:
            return 0, True
        for key in keys_for(op, ty, callee):
            if key in self.entries:
                return self.entries[key], True
        return self.default, False

    def cost(self, op: str, ty: Type | None = None, callee: str | None = None) -> int:
        return self.lookup(op, ty, callee)[0]


def keys_for(op: str, ty: Type | None, callee: str | None = None) -> list[str]:
    if op == "call":
        desc = intrinsics.lookup(callee)
        name = intrinsics.canonical_name(desc)
        fam = "pmadd.wd" if desc.family == "pmadd_wd" else desc.family
        return [name, fam]
    if ty is None:
        return [op]
    keys = [f"{op}.{ty.descriptor()}"]
    if ty.vector:
        keys.append(f"{op}.*i{ty.width}")
    keys.append(op)
    return keys


def _parse(text: str, target: str | None, source: str = "") -> dict[str, dict[str, int]]:
    tables: dict[str, dict[str, int]] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise CostTableError(f"expected '<target> <descriptor> <uops>', got {raw.strip()!r}", n)
        tgt, key, val = parts
        try:
            uops = int(val)
        except ValueError:
            raise CostTableError(f"uop count {val!r} is not an integer", n) from None
        if uops < 0:
            raise CostTableError("uop counts are non-negative", n)
        t = tables.setdefault(tgt, {})
        if key in t:
            raise CostTableError(f"duplicate entry for {tgt} {key}", n)
        t[key] = uops
    return tables


def _shipped(target: str) -> str:
    return resources.files("vexor").joinpath("data", f"{target}.cost").read_text()


def load_cost_table(path: Union[str, Path, None] = None, target: str = "cascade") -> CostTable:
    """Load ``target`` from ``path`` (or the shipped table of that name).

    A file that does not mention ``target`` yields the shipped table for it
    when one exists, else a table of defaults only.
    """
    if path is None:
        if target not in TARGETS:
            raise CostTableError(f"no shipped table for target {target!r}")
        text = _shipped(target)
    else:
        text = Path(path).read_text(encoding="utf-8")
    tables = _parse(text, target)
    if target not in tables:
        if path is not None and target in TARGETS:
            tables[target] = _parse(_shipped(target), target)[target]
        else:
            return CostTable(target, {}, 1)
    entries = dict(tables[target])
    default = entries.pop("default", 1)
    return CostTable(target, entries, default)


# ------------------------------------------------------------ ordering weight

APPROX_WEIGHTS = {
    "bitcast": 0,
    "and": 10, "or": 10, "xor": 10, "add": 10, "sub": 10,
    "shl": 10, "lshr": 10, "ashr": 10,
    "icmp": 11, "zext": 11, "sext": 11, "trunc": 11,
    "pslli": 11, "psrli": 11, "psrai": 11,
    "shufflevector": 12, "extractelement": 12, "insertelement": 12,
    "pavg": 12, "bswap": 12,
    "mul": 13,
    "ctpop": 14, "ctlz": 14, "cttz": 14, "bitreverse": 14, "pmadd_wd": 14,
    "udiv": 19, "sdiv": 19,
}
"""Every real node weighs 10..19, so any one-node term sorts before any
two-node term and the stream grows by size first."""


def node_weight(op: str, callee: str | None = None) -> int:
    if op == "call":
        return APPROX_WEIGHTS[intrinsics.lookup(callee).family]
    return APPROX_WEIGHTS[op]


def approx_cost(r: Node) -> int:
    return sum(node_weight(n.op, n.callee) for n in inst_nodes(r))


# ------------------------------------------------------------------- uOps

def instruction_key(inst: Instruction) -> tuple[str, Type | None, str | None]:
    if inst.op == "icmp":
        return "icmp", inst.argty, None
    return inst.op, inst.ty, inst.callee


def uop_cost(code: Union[Function, Node], table: CostTable) -> int:
    return uop_breakdown(code, table)[0]


def uop_breakdown(code: Union[Function, Node], table: CostTable) -> tuple[int, list[tuple[str, int, bool]]]:
    """Total and per-node (descriptor, uops, table hit)."""
    items = []
    if isinstance(code, Function):
        for _, inst in code.instructions():
            if inst.op in ("store", "load", "gep"):
                op, ty, callee = inst.op, inst.ty, None
            else:
                op, ty, callee = instruction_key(inst)
            items.append((op, ty, callee))
        for b in code.blocks:
            if b.term.kind == "cbr":
                items.append(("br.cond", None, None))
    else:
        for n in inst_nodes(code):
            ty = n.args[0].ty if n.op == "icmp" else n.ty
            items.append((n.op, ty, n.callee))
    out, total = [], 0
    for op, ty, callee in items:
        uops, hit = table.lookup(op, ty, callee)
        total += uops
        out.append((keys_for(op, ty, callee)[0] if op not in FREE else op, uops, hit))
    return total, out
