"""Intrinsic kernels, the interpreter and the reference oracle."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vexor import intrinsics
from vexor.interp import Env, Trap, VectorValue, eval_function, eval_rewrite
from vexor.intrinsics import IntrinsicDescriptor
from vexor.kernels import U64, Batch
from vexor.reference import oracle_eval
from vexor.rewrite import parse_rewrite
from vexor.text import parse_function
from vexor.types import int_type, vec_type

from conftest import corpus_function

I8, I32, I64 = int_type(8), int_type(32), int_type(64)


def batch(ty, rows):
    """Batch from a list of rows (lists of lanes; None is poison)."""
    vals = np.array([[0 if v is None else v for v in r] for r in rows], dtype=U64).reshape(len(rows), ty.lanes)
    poison = np.array([[v is None for v in r] for r in rows], dtype=bool).reshape(len(rows), ty.lanes)
    return Batch(ty, vals, poison)


def run(name, *operands):
    """Call an intrinsic on one row; operands are lists of lanes."""
    desc = intrinsics.lookup(name) if isinstance(name, str) else name
    out = intrinsics.call(desc, [batch(t, [o]) for t, o in zip(desc.operand_types(), operands)])
    return [None if p else int(v) for v, p in zip(out.vals[0], out.poison[0])]


def signed(v, w):
    return v - (1 << w) if v >> (w - 1) else v


def unsigned(v, w):
    return v & ((1 << w) - 1)


# ---------------------------------------------------------------- interpreter

def test_shl_scalar():
    f = parse_function("func @f(%x: i32) -> i32 {\nentry:\n  %0 = shl %x, 3 : i32\n  ret %0\n}")
    assert eval_function(f, Env({"x": VectorValue.of(I32, 5)})).lanes == (40,)


def test_ex4_argument_order_irrelevant():
    f = corpus_function("ex4")
    t = vec_type(2, 4)
    a, b = VectorValue.of(t, 3, 14), VectorValue.of(t, 9, 1)
    yes = eval_function(f, Env({"a": a, "b": b, "c": VectorValue.of(int_type(1), 1)}))
    no = eval_function(f, Env({"a": b, "b": a, "c": VectorValue.of(int_type(1), 0)}))
    assert yes == no


def test_poison_is_lane_local_for_add():
    t = vec_type(4, 8)
    f = parse_function("func @f(%x: <4 x i8>, %y: <4 x i8>) -> <4 x i8> {\nentry:\n  %0 = add %x, %y : <4 x i8>\n  ret %0\n}")
    out = eval_function(f, Env({"x": VectorValue.of(t, None, 1, 2, 3), "y": VectorValue.of(t, 1)}))
    assert out.lanes == (None, 2, 3, 4)


def test_oversized_ir_shift_is_poison():
    f = parse_function("func @f(%x: i8) -> i8 {\nentry:\n  %0 = shl %x, 9 : i8\n  ret %0\n}")
    assert eval_function(f, Env({"x": VectorValue.of(I8, 1)})).lanes == (None,)


@pytest.mark.parametrize("text", ["udiv %x, 0 : i8", "sdiv %x, 0 : i8"])
def test_division_by_zero_traps(text):
    f = parse_function(f"func @f(%x: i8) -> i8 {{\nentry:\n  %0 = {text}\n  ret %0\n}}")
    with pytest.raises(Trap):
        eval_function(f, Env({"x": VectorValue.of(I8, 1)}))


def test_sdiv_overflow_traps():
    f = parse_function("func @f(%x: i8) -> i8 {\nentry:\n  %0 = sdiv %x, 255 : i8\n  ret %0\n}")
    with pytest.raises(Trap):
        eval_function(f, Env({"x": VectorValue.of(I8, 128)}))


@pytest.mark.parametrize("op, want", [("ctlz", 8), ("cttz", 8), ("ctpop", 0)])
def test_bit_counts_of_zero(op, want):
    r = parse_rewrite(f"({op} (val i8 %x))")
    assert eval_rewrite(r, Env({"x": VectorValue.of(I8, 0)})).lanes == (want,)


def test_eval_rewrite_examples():
    assert eval_rewrite(parse_rewrite("(shl (val i32 %0), (const i32 1), i32)"),
                        Env({"0": VectorValue.of(I32, 3)})).lanes == (6,)
    assert eval_rewrite(parse_rewrite("(ctpop (val i64 %0), i64)"),
                        Env({"0": VectorValue.of(I64, 0xFF)})).lanes == (8,)
    t = vec_type(16, 8)
    out = eval_rewrite(parse_rewrite("(sse2.pavg.b (val <16 x i8> %a), (val <16 x i8> %b))"),
                       Env({"a": VectorValue.of(t, 254), "b": VectorValue.of(t, 255)}))
    assert out.lanes == (255,) * 16


@given(st.integers(0, 2**64 - 1))
def test_evaluation_is_deterministic(x):
    f = corpus_function("ex5")
    env = Env({"x": VectorValue.of(I64, x)})
    assert eval_function(f, env) == eval_function(f, env)


# ----------------------------------------------------------------------- pavg

def all_pairs(width):
    n = 1 << width
    a = np.repeat(np.arange(n, dtype=U64), n).reshape(-1, 1)
    b = np.tile(np.arange(n, dtype=U64), n).reshape(-1, 1)
    z = np.zeros_like(a, dtype=bool)
    return Batch(int_type(width), a, z), Batch(int_type(width), b, z)


def test_pavg_exhaustive_width8_against_widened_sum():
    desc = IntrinsicDescriptor("pavg", 1, 8, False)
    a, b = all_pairs(8)
    got = intrinsics.call(desc, [a, b]).vals[:, 0]
    want = np.array([(x + y + 1) >> 1 for x in range(256) for y in range(256)], dtype=U64)
    assert int((got != want).sum()) == 0
    assert run(desc, [254], [255]) == [255]
    assert run(desc, [0], [0]) == [0]


def test_pavg_bounds_and_commutativity_width8():
    desc = IntrinsicDescriptor("pavg", 1, 8, False)
    a, b = all_pairs(8)
    ab = intrinsics.call(desc, [a, b]).vals[:, 0]
    ba = intrinsics.call(desc, [b, a]).vals[:, 0]
    lo = np.minimum(a.vals[:, 0], b.vals[:, 0])
    hi = np.maximum(a.vals[:, 0], b.vals[:, 0])
    assert (ab == ba).all()
    assert ((lo <= ab) & (ab <= hi)).all()
    same = a.vals[:, 0] == b.vals[:, 0]
    assert (ab[same] == a.vals[same, 0]).all()


def test_masked_pavg_copies_passthrough():
    desc = intrinsics.lookup("avx512.mask.pavg.b")
    n = desc.lanes
    a, b = [200] * n, [100] * n
    pt = [None if k % 3 == 0 else k for k in range(n)]
    mask = [k % 2 for k in range(n)]
    out = run(desc, a, b, pt, mask)
    for k in range(n):
        assert out[k] == (150 if mask[k] else pt[k])


# ---------------------------------------------------------------------- pmadd

def test_pmadd_examples():
    assert run("sse2.pmadd.wd", [1, 1] * 4, [1, unsigned(-1, 16)] * 4) == [0] * 4
    assert run("sse2.pmadd.wd", [0] * 8, [0] * 8) == [0] * 4
    m = unsigned(-32768, 16)
    assert run("sse2.pmadd.wd", [m] * 8, [m] * 8) == [unsigned(-2147483648, 32)] * 4


def test_pmadd_random_against_64bit_accumulation():
    rng = np.random.default_rng(7)
    desc = intrinsics.lookup("sse2.pmadd.wd")
    n = 100_000
    a = rng.integers(0, 1 << 16, size=(n, 8), dtype=np.uint64)
    b = rng.integers(0, 1 << 16, size=(n, 8), dtype=np.uint64)
    z = np.zeros((n, 8), dtype=bool)
    got = intrinsics.call(desc, [Batch(vec_type(8, 16), a, z), Batch(vec_type(8, 16), b, z)]).vals
    sa = a.astype(np.int64) - ((a >> 15).astype(np.int64) << 16)
    sb = b.astype(np.int64) - ((b >> 15).astype(np.int64) << 16)
    prod = sa * sb
    want = ((prod[:, 0::2] + prod[:, 1::2]) & 0xFFFFFFFF).astype(np.uint64)
    assert (got == want).all()


def test_pmadd_poison_covers_pair():
    out = run("sse2.pmadd.wd", [None] + [1] * 7, [1] * 8)
    assert out == [None, 2, 2, 2]


# --------------------------------------------------------------------- shifts

def test_immediate_shifts():
    assert run("mmx.psrli.d", [0xFFFFFFFF] * 2, [30]) == [3, 3]
    assert run("mmx.psrli.d", [0xFFFFFFFF, 7], [32]) == [0, 0]
    assert run("mmx.pslli.d", [1, 2], [40]) == [0, 0]
    assert run("mmx.psrai.d", [0x80000000, 5], [99]) == [0xFFFFFFFF, 0]
    for name in ("mmx.pslli.w", "mmx.psrli.w", "mmx.psrai.w"):
        assert run(name, [1, 0x8000, 77, None], [0]) == [1, 0x8000, 77, None]


@given(st.integers(0, 2**32 - 1), st.integers(0, 70))
def test_psrli_matches_wide_shift(x, imm):
    assert run("mmx.psrli.d", [x, x], [imm]) == [(x >> imm) & 0xFFFFFFFF] * 2


@given(st.integers(0, 2**32 - 1), st.integers(0, 70))
def test_psrai_matches_signed_shift(x, imm):
    assert run("mmx.psrai.d", [x, 0], [imm])[0] == unsigned(signed(x, 32) >> min(imm, 31), 32)


# ------------------------------------------------------------- oracle and poison

def test_oracle_agrees_with_pavg_single_lane():
    desc = IntrinsicDescriptor("pavg", 1, 8, False)
    a, b = all_pairs(8)
    got = intrinsics.call(desc, [a, b]).vals[:, 0]
    want = [oracle_eval(desc, [[x], [y]])[0] for x in range(256) for y in range(256)]
    assert got.tolist() == want


def test_oracle_catches_wrapping_pavg():
    desc = intrinsics.lookup("mmx.pavg.b")
    with intrinsics.mutation("pavg-wrapping-sum"):
        bad = run(desc, [255] * 8, [255] * 8)
    assert bad != oracle_eval(desc, [[255] * 8, [255] * 8])
    assert run(desc, [255] * 8, [255] * 8) == [255] * 8


NAMES = sorted(intrinsics.registry())


@given(st.sampled_from(NAMES), st.data())
def test_poison_lane_locality(name, data):
    desc = intrinsics.lookup(name)
    tys = desc.operand_types()
    ops = [[data.draw(st.integers(0, t.mask)) for _ in range(t.lanes)] for t in tys]
    if desc.is_shift:
        ops[1] = [data.draw(st.integers(0, desc.width + 1))]
    if desc.masked:
        ops[-1] = [1] * tys[-1].lanes
    pos = data.draw(st.integers(0, 1))
    lane = data.draw(st.integers(0, tys[pos].lanes - 1))
    base = run(desc, *ops)
    ops[pos] = list(ops[pos])
    ops[pos][lane] = None
    out = run(desc, *ops)
    if desc.is_shift and pos == 1:
        assert all(v is None for v in out)
        return
    group = 2 if desc.family == "pmadd_wd" else 1
    changed = [k for k in range(len(out)) if out[k] != base[k]]
    assert changed == [lane // group]
    assert out[lane // group] is None
