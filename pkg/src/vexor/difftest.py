"""Differential testing of the intrinsic kernels against the naive oracle.

Every descriptor first meets a systematic input set (lane boundary values,
every small shift amount, masks of each polarity, poison in each operand),
then seeded random inputs.  Random calls are spread round-robin over the
descriptors, so ``iterations`` is the total number of random calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import intrinsics
from .intrinsics import IntrinsicDescriptor
from .kernels import U64, Batch
from .reference import oracle_eval
from .types import Type

# Generic shapes exercised alongside the named x86 intrinsics; these are
# the shapes the example corpus uses.
EXTRA_SHAPES = ("pavg.v2i4", "pavg.v3i4", "pavg.v3i8", "pmadd.wd.v2i8", "psrli.v2i8", "psrai.v2i8")


@dataclass(frozen=True)
class Disagreement:
    name: str
    operands: tuple
    expected: tuple
    got: tuple

    def __str__(self):
        show = lambda lanes: "<" + ", ".join("poison" if v is None else str(v) for v in lanes) + ">"
        ops = ", ".join(show(o) for o in self.operands)
        return f"{self.name}({ops}): oracle {show(self.expected)}, kernel {show(self.got)}"


@dataclass
class DiffReport:
    descriptors: int = 0
    systematic_rows: int = 0
    random_rows: int = 0
    disagreements: list = field(default_factory=list)
    per_descriptor: dict = field(default_factory=dict)  # name -> mismatch count

    @property
    def ok(self) -> bool:
        return not self.disagreements


def boundary_values(width: int) -> list[int]:
    m = (1 << width) - 1
    top = 1 << (width - 1)
    vals = {0, 1, 2, m, m - 1, top, top - 1, top + 1, 0x55 & m, 0xAA & m}
    return sorted(v & m for v in vals)


def shift_amounts(width: int) -> list[int]:
    return list(range(width + 2)) + [2 * width, 255, (1 << 31) - 1, 1 << 31, (1 << 32) - 1]


def _rows_to_batch(ty: Type, rows: list[list[Optional[int]]]) -> Batch:
    vals = np.array([[0 if v is None else v for v in r] for r in rows], dtype=U64).reshape(len(rows), ty.lanes)
    poison = np.array([[v is None for v in r] for r in rows], dtype=bool).reshape(len(rows), ty.lanes)
    return Batch(ty, vals, poison)


def _batch_rows(b: Batch) -> list[tuple]:
    return [tuple(None if p else int(v) for v, p in zip(vr, pr)) for vr, pr in zip(b.vals, b.poison)]


def _systematic(desc: IntrinsicDescriptor) -> list[list[list[Optional[int]]]]:
    """Operand tuples (one list of lanes per operand)."""
    tys = desc.operand_types()
    a_ty = tys[0]
    bv = boundary_values(a_ty.width)
    rows = []

    def lanes(seq, ty):
        return [seq[k % len(seq)] for k in range(ty.lanes)]

    if desc.is_shift:
        firsts = [lanes(bv, a_ty), lanes(bv[::-1], a_ty), [a_ty.mask] * a_ty.lanes, [1 << (a_ty.width - 1)] * a_ty.lanes]
        for x in firsts:
            for amt in shift_amounts(desc.width):
                rows.append([x, [amt]])
    else:
        # Every pair of boundary values, rotated over the lanes.
        for i, x in enumerate(bv):
            for j, y in enumerate(bv):
                a = [bv[(i + k) % len(bv)] for k in range(a_ty.lanes)]
                b = [bv[(j + 3 * k) % len(bv)] for k in range(a_ty.lanes)]
                a[0], b[0] = x, y
                rows.append([a, b])
    if desc.masked:
        rty, mty = desc.result_type, tys[-1]
        base = rows[: max(1, len(rows) // 4)]
        masks = [[1] * mty.lanes, [0] * mty.lanes, [k % 2 for k in range(mty.lanes)],
                 [(k + 1) % 2 for k in range(mty.lanes)]]
        pt = [(7 * k + 3) & rty.mask for k in range(rty.lanes)]
        pt_poison = [None if k % 3 == 0 else v for k, v in enumerate(pt)]
        rows = [r + [p, m] for r in base for m in masks for p in (pt, pt_poison)]
        # A poison mask lane.
        rows.append(rows[0][:3] + [[None] + [1] * (mty.lanes - 1)])
    # Poison in each operand position.
    for pos in range(len(tys)):
        r = [list(x) for x in rows[0]]
        r[pos][0] = None
        rows.append(r)
    return rows


def _random(desc: IntrinsicDescriptor, n: int, rng: np.random.Generator) -> list[list[list[Optional[int]]]]:
    tys = desc.operand_types()
    out = []
    for _ in range(n):
        ops = []
        for k, ty in enumerate(tys):
            if desc.is_shift and k == 1:
                amt = int(rng.integers(0, 2 * desc.width + 2)) if rng.random() < 0.9 else int(rng.integers(0, 1 << 32))
                ops.append([amt])
            else:
                lanes = rng.integers(0, ty.mask, size=ty.lanes, dtype=np.uint64, endpoint=True)
                ops.append([int(v) for v in lanes])
        out.append(ops)
    return out


def check_rows(name: str, desc: IntrinsicDescriptor, rows, report: DiffReport, limit: int = 5) -> int:
    """Run ``rows`` through both evaluators; returns the number of mismatches."""
    if not rows:
        return 0
    tys = desc.operand_types()
    batches = [_rows_to_batch(ty, [r[k] for r in rows]) for k, ty in enumerate(tys)]
    got = _batch_rows(intrinsics.call(desc, batches))
    bad = 0
    for r, g in zip(rows, got):
        want = tuple(oracle_eval(desc, [list(x) for x in r]))
        if want != g:
            bad += 1
            if sum(1 for d in report.disagreements if d.name == name) < limit:
                report.disagreements.append(Disagreement(name, tuple(tuple(x) for x in r), want, g))
    report.per_descriptor[name] = report.per_descriptor.get(name, 0) + bad
    return bad


def difftest(iterations: int = 100_000, seed: int = 0, mutate: Optional[str] = None,
             names: Optional[Iterable[str]] = None) -> DiffReport:
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    if names is None:
        names = list(intrinsics.registry()) + list(EXTRA_SHAPES)
    descs = [(n, intrinsics.lookup(n)) for n in names]
    rng = np.random.default_rng(seed)
    report = DiffReport(descriptors=len(descs))
    share = [iterations // len(descs) + (1 if k < iterations % len(descs) else 0) for k in range(len(descs))]
    with intrinsics.mutation(mutate):
        for (name, desc), n in zip(descs, share):
            sys_rows = _systematic(desc)
            report.systematic_rows += len(sys_rows)
            check_rows(name, desc, sys_rows, report)
            rand = _random(desc, n, rng)
            report.random_rows += len(rand)
            check_rows(name, desc, rand, report)
    return report
