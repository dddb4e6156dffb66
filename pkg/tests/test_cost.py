import pytest
from hypothesis import given, strategies as st

from vexor import intrinsics
from vexor.cost import (APPROX_WEIGHTS, CostTableError, approx_cost, load_cost_table, node_weight,
                        uop_breakdown, uop_cost)
from vexor.rewrite import inst_nodes, parse_rewrite

from conftest import corpus_function

# The rewrites the synthesizer is expected to find for the corpus, with the
# whole-slice and rewrite uOps under the cascade table.
GOLDEN = {
    "gzip": ("(icmp eq (val <8 x i8> %x) (const <8 x i8> 46))", 13, 3),
    "ex1": ("(pavg.v3i4 (val <3 x i4> %a), (val <3 x i4> %b))", 4, 1),
    "ex2": ("(pmadd.wd.v2i8 (val <4 x i4> %x), (const <4 x i4> <15, 1, 15, 1>))", 8, 3),
    "ex3": ("(mmx.psrli.d (bitcast (val <8 x i8> %x), <2 x i32>), (const i32 30))", 11, 4),
    "ex4": ("(pavg.v2i4 (val <2 x i4> %a), (val <2 x i4> %b))", 10, 4),
    "ex5": ("(bitcast (ctpop (bitcast (val i64 %x), <8 x i8>)), i64)", 19, 13),
}


@pytest.fixture(scope="module")
def cascade():
    return load_cost_table(None, "cascade")


def test_approx_examples():
    assert approx_cost(parse_rewrite("(val i32 %x)")) == 0
    assert approx_cost(parse_rewrite("(shl (val i32 %x), (const i32 3))")) == node_weight("shl")
    assert node_weight("mul") > node_weight("shl")
    assert APPROX_WEIGHTS["bitcast"] == 0


@pytest.mark.parametrize("name", GOLDEN)
def test_golden_pairs(cascade, name):
    rw, before, after = GOLDEN[name]
    assert uop_cost(corpus_function(name), cascade) == before
    assert uop_cost(parse_rewrite(rw), cascade) == after


@pytest.mark.parametrize("name", GOLDEN)
def test_zen3_agrees_on_direction(name):
    zen3 = load_cost_table(None, "zen3")
    rw = parse_rewrite(GOLDEN[name][0])
    assert uop_cost(rw, zen3) < uop_cost(corpus_function(name), zen3)


def test_shipped_entries(cascade):
    assert cascade.cost("call", callee="sse2.pavg.b") == 1
    assert cascade.cost("bitcast") == 0
    for name, desc in intrinsics.registry().items():
        assert cascade.lookup("call", callee=name)[1], name


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "t.cost"
    p.write_text("")
    t = load_cost_table(p, "elsewhere")
    assert t.entries == {} and t.default == 1


def test_missing_target_falls_back_to_shipped(tmp_path, cascade):
    p = tmp_path / "t.cost"
    p.write_text("other add 9\n")
    assert load_cost_table(p, "cascade").entries == cascade.entries


@pytest.mark.parametrize("text, line", [
    ("cascade add 1\ncascade add 2\n", 2),
    ("# c\ncascade add\n", 2),
    ("cascade add x\n", 1),
    ("cascade add -1\n", 1),
])
def test_table_errors(tmp_path, text, line):
    p = tmp_path / "t.cost"
    p.write_text(text)
    with pytest.raises(CostTableError) as e:
        load_cost_table(p, "cascade")
    assert e.value.line == line


def test_breakdown_flags_defaults(tmp_path):
    p = tmp_path / "t.cost"
    p.write_text("t add 2\nt default 5\n")
    t = load_cost_table(p, "t")
    total, items = uop_breakdown(parse_rewrite("(mul (add (val i8 %x), (const i8 1)), (val i8 %x))"), t)
    assert total == 7
    assert [hit for *_, hit in items] == [True, False]


def test_phi_and_conditional_branch_cost(cascade):
    _, items = uop_breakdown(corpus_function("ex4"), cascade)
    costs = {d: u for d, u, _ in items}
    assert [d for d, *_ in items].count("phi.v2i4") == 2
    assert costs["phi.v2i4"] == 2 and costs["br.cond"] == 2


OPS = ["add", "sub", "xor", "and", "mul", "shl", "ctpop"]


@st.composite
def dags(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return "(val i16 %x)"
    op = draw(st.sampled_from(OPS))
    if op == "ctpop":
        return f"(ctpop {draw(dags(depth - 1))})"
    return f"({op} {draw(dags(depth - 1))}, (const i16 {draw(st.integers(0, 15))}))"


@given(dags())
def test_cost_is_additive(text):
    r = parse_rewrite(text)
    t = load_cost_table(None, "cascade")
    assert uop_cost(r, t) == sum(t.cost(n.op, n.ty, n.callee) for n in inst_nodes(r))
    assert approx_cost(r) == sum(node_weight(n.op) for n in inst_nodes(r))
