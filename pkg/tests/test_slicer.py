import random

import pytest
from hypothesis import given, settings, strategies as st

from vexor.cfg import is_acyclic
from vexor.gen import random_function
from vexor.ir import Ref
from vexor.slicer import Forwarded, GiveUp, SliceError, extract_slice, resolve_load
from vexor.text import parse_function, print_function
from vexor.validate import validate

from conftest import corpus_function
from props import check_slices, sliceable

CHAIN = """func @f(%x: i8, %y: i8) -> i8 {
entry:
  %1 = mul %x, 8 : i8
  %2 = add %1, %y : i8
  ret %2
}"""


def test_whole_chain_fits():
    s = extract_slice(parse_function(CHAIN), "2", 5)
    assert set(s.params) == {"x", "y"}
    assert len(list(s.function.instructions())) == 2
    assert s.target == "2"


def test_depth_cutoff_frees_operand():
    s = extract_slice(parse_function(CHAIN), "2", 1)
    assert {s.binding[p] for p in s.params} == {"1", "y"}
    assert [i.op for _, i in s.function.instructions()] == ["add"]


def test_ex4_keeps_branch_and_phis():
    s = extract_slice(corpus_function("ex4"), "2", 5)
    f = s.function
    assert len(f.blocks) == 3
    assert set(s.params) == {"a", "b", "c"}
    assert [i.op for _, i in f.instructions()] == ["phi", "phi", "call"]
    assert f.entry.term.kind == "cbr"


def test_errors():
    f = parse_function(CHAIN)
    with pytest.raises(SliceError):
        extract_slice(f, "nope", 3)
    with pytest.raises(SliceError):
        extract_slice(f, "x", 3)


def test_loop_values_are_cut():
    f = parse_function("""func @l(%n: i8) -> i8 {
entry:
  br head
head:
  %i = phi i8 [0, entry], [%j, head]
  %j = add %i, 1 : i8
  %c = icmp ult %j, %n : i8
  br %c, head, out
out:
  %r = mul %j, 3 : i8
  ret %r
}""")
    s = extract_slice(f, "r", 5)
    assert is_acyclic(s.function)
    # The induction phi carries a back edge, so it is freed.
    assert {s.binding[p] for p in s.params} == {"i"}
    body = extract_slice(f, "j", 5)
    assert is_acyclic(body.function) and not validate(body.function)


MEM = "func @m(%v: i32, %w: i32, %p: ptr, %q: ptr) -> i32 {{\nentry:\n{body}\n}}"


def test_adjacent_store_forwards():
    f = parse_function(MEM.format(body="  store %v, %p\n  %0 = load i32, %p\n  ret %0"))
    r = resolve_load(f, "0")
    assert isinstance(r, Forwarded) and r.value == Ref("v")
    s = extract_slice(f, "0", 5)
    assert "v" in s.params


def test_intervening_store_gives_up():
    f = parse_function(MEM.format(body="  store %v, %p\n  store %w, %q\n  %0 = load i32, %p\n"
                                  "  %1 = add %0, 1 : i32\n  ret %1"))
    assert isinstance(resolve_load(f, "0"), GiveUp)
    assert set(extract_slice(f, "1", 5).binding.values()) == {"0"}


def test_merge_point_gives_up():
    f = parse_function("""func @m(%v: i32, %c: i1, %p: ptr) -> i32 {
entry:
  br %c, l, r
l:
  store %v, %p
  br j
r:
  store %v, %p
  br j
j:
  %0 = load i32, %p
  ret %0
}""")
    assert isinstance(resolve_load(f, "0"), GiveUp)


def test_slice_overapproximates_small_corpus():
    st_ = check_slices(n_functions=150, inputs=50, seed=11)
    assert st_.slices > 500
    assert (st_.mismatches, st_.invalid, st_.cyclic, st_.non_monotone) == (0, 0, 0, 0)


@settings(max_examples=60)
@given(st.integers(0, 2**32), st.integers(1, 6))
def test_slicing_a_slice_is_idempotent(seed, depth):
    f = random_function(random.Random(seed))
    for v in list(sliceable(f))[:4]:
        try:
            s = extract_slice(f, v, depth)
        except SliceError:
            continue
        again = extract_slice(s.function, s.target, depth)
        assert print_function(again.function) == print_function(s.function)


@settings(max_examples=60)
@given(st.integers(0, 2**32))
def test_depth_monotone(seed):
    f = random_function(random.Random(seed))
    for v in sliceable(f):
        try:
            prev = extract_slice(f, v, 1).harvested
            for d in range(2, 7):
                cur = extract_slice(f, v, d).harvested
                assert prev <= cur
                prev = cur
        except SliceError:
            pass
