import random
import time

import pytest
from hypothesis import given, settings, strategies as st

from vexor import reference
from vexor.gen import GenConfig, random_function
from vexor.interp import Env, VectorValue
from vexor.rewrite import fill_holes, parse_rewrite, rewrite_of_function
from vexor.text import parse_function
from vexor.types import int_type
from vexor.verify import Status, VerifyConfig, Verifier, check_input, refine, synth_constants

from conftest import corpus_function

I8 = int_type(8)
STRAIGHT = GenConfig(regions=0, p_memory=0.0)


def scalar(body, w=8, params="%x: i{w}"):
    p = params.format(w=w)
    return parse_function(f"func @f({p}) -> i{w} {{\nentry:\n{body.format(w=w)}\n}}")


MUL8 = "  %0 = mul %x, 8 : i{w}\n  ret %0"
MUL7 = "  %0 = mul %x, 7 : i{w}\n  ret %0"
SHL3 = "(shl (val i{w} %x), (const i{w} 3))"


def test_check_input_examples():
    spec, cand = scalar(MUL8), parse_rewrite(SHL3.format(w=8))
    assert check_input(spec, cand, Env({"x": VectorValue.of(I8, 5)}))
    assert not check_input(scalar(MUL7), cand, Env({"x": VectorValue.of(I8, 1)}))


def test_spec_poison_refined_by_anything():
    spec = scalar("  %0 = shl %x, 9 : i8\n  ret %0")
    assert check_input(spec, parse_rewrite("(const i8 77)"), Env({"x": VectorValue.of(I8, 3)}))


def test_spec_trap_is_vacuous():
    spec = scalar("  %0 = udiv %x, %y : i8\n  ret %0", params="%x: i8, %y: i8")
    cand = parse_rewrite("(const i8 0)")
    assert check_input(spec, cand, Env({"x": VectorValue.of(I8, 3), "y": VectorValue.of(I8, 0)}))
    assert refine(spec, cand).status is Status.REFUTED


@pytest.mark.parametrize("w, n", [(8, 256), (16, 65536)])
def test_mul_by_eight_is_shift(w, n):
    v = refine(scalar(MUL8, w), parse_rewrite(SHL3.format(w=w)))
    assert v.status is Status.PROVED_EXHAUSTIVE
    assert v.inputs_checked == n


def test_mul_by_seven_refuted_with_replayable_cex():
    spec, cand = scalar(MUL7), parse_rewrite(SHL3.format(w=8))
    v = refine(spec, cand)
    assert v.status is Status.REFUTED
    assert not check_input(spec, cand, v.counterexample)
    x = v.counterexample.values["x"].lanes[0]
    assert (7 * x) % 256 != (8 * x) % 256


def test_ex1_exhaustive_over_support():
    v = refine(corpus_function("ex1"), parse_rewrite("(pavg.v3i4 (val <3 x i4> %a), (val <3 x i4> %b))"),
               VerifyConfig(exhaustive_bits=24))
    assert v.status is Status.PROVED_EXHAUSTIVE and v.inputs_checked == 1 << 24


def test_wide_input_is_sampled():
    spec = corpus_function("ex5")
    v = refine(spec, parse_rewrite("(bitcast (ctpop (bitcast (val i64 %x), <8 x i8>)), i64)"))
    assert v.status is Status.PROVED_SAMPLED and v.inputs_checked >= 100_000


def test_exhaustive_verdict_matches_naive_evaluator():
    # Independent re-check of a proof with the scalar reference evaluator.
    spec = scalar("  %0 = add %x, %x : i8\n  %1 = xor %0, %y : i8\n  ret %1", params="%x: i8, %y: i8")
    cand = parse_rewrite("(xor (shl (val i8 %x), (const i8 1)), (val i8 %y))")
    v = refine(spec, cand)
    assert v.status is Status.PROVED_EXHAUSTIVE and v.inputs_checked == 65536
    for x in range(256):
        for y in range(0, 256, 7):
            want = reference.eval_function(spec, {"x": [x], "y": [y]})
            assert reference.eval_rewrite(cand, {"x": [x], "y": [y]}) == want


def test_poison_inputs_flag():
    # A poison x makes the spec poison, which the constant refines.
    spec = scalar("  %0 = and %x, 0 : i8\n  ret %0")
    cand = parse_rewrite("(const i8 0)")
    assert refine(spec, cand, VerifyConfig(poison_inputs=True)).proved
    assert refine(scalar("  %0 = add %x, 0 : i8\n  ret %0"), parse_rewrite("(val i8 %x)"),
                  VerifyConfig(poison_inputs=True)).proved


def test_synth_shift_amount():
    assert synth_constants(scalar(MUL8), parse_rewrite("(shl (val i8 %x), (hole i8))")) == {0: (3,)}


def test_synth_identity():
    assert synth_constants(scalar("  %0 = add %x, 0 : i8\n  ret %0"), parse_rewrite("(add (val i8 %x), (hole i8))")) == {0: (0,)}


def test_synth_gives_up_when_nothing_fits():
    assert synth_constants(scalar(MUL7), parse_rewrite("(shl (val i8 %x), (hole i8))")) is None


def test_synth_ex3_immediate():
    t0 = time.perf_counter()
    got = synth_constants(corpus_function("ex3"),
                          parse_rewrite("(mmx.psrli.d (bitcast (val <8 x i8> %x), <2 x i32>), (hole i32))"))
    assert got == {0: (30,)}
    assert time.perf_counter() - t0 < 10


@settings(max_examples=40)
@given(st.integers(0, 2**32))
def test_reflexive_on_random_functions(seed):
    f = random_function(random.Random(seed), STRAIGHT)
    v = refine(f, rewrite_of_function(f), VerifyConfig(samples=2000))
    assert v.proved


@settings(max_examples=30)
@given(st.integers(0, 255), st.integers(0, 255))
def test_refuted_verdicts_replay(a, b):
    spec = scalar(f"  %0 = mul %x, {a} : i8\n  ret %0")
    cand = parse_rewrite(f"(mul (val i8 %x), (const i8 {b}))")
    v = refine(spec, cand)
    if a == b:
        assert v.status is Status.PROVED_EXHAUSTIVE
    else:
        assert v.status is Status.REFUTED
        assert not check_input(spec, cand, v.counterexample)


@settings(max_examples=25)
@given(st.integers(0, 255), st.sampled_from(["add", "xor", "sub", "and", "or"]))
def test_cegis_soundness(k, op):
    spec = scalar(f"  %0 = {op} %x, {k} : i8\n  ret %0")
    cand = parse_rewrite(f"({op} (val i8 %x), (hole i8))")
    got = synth_constants(spec, cand)
    assert got is not None
    assert refine(spec, fill_holes(cand, got)).status is not Status.REFUTED


def test_transitivity_on_a_chain():
    # mul 8 => shl 3 => add of shl 2 with itself
    a, b = scalar(MUL8), scalar("  %0 = shl %x, 3 : i8\n  ret %0")
    ab = parse_rewrite("(shl (val i8 %x), (const i8 3))")
    bc = parse_rewrite("(add (shl (val i8 %x), (const i8 2)), (shl (val i8 %x), (const i8 2)))")
    assert refine(a, ab).proved and refine(b, bc).proved and refine(a, bc).proved


def test_verifier_counts_queries():
    vf = Verifier(scalar(MUL8))
    vf.refine(parse_rewrite(SHL3.format(w=8)))
    assert vf.queries == 1
