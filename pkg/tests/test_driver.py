import json

import pytest

from vexor.cache import RewriteCache
from vexor.driver import (CACHE_HIT, OUTCOMES, REWRITE, OptConfig, RewriteRejected, apply_rewrite,
                          dead_code_elimination, eligible_values, optimize_function)
from vexor.ir import Ref
from vexor.report import COLUMNS, plot_reports, render
from vexor.rewrite import parse_rewrite
from vexor.synth import SynthConfig
from vexor.text import parse_function, print_function
from vexor.validate import validate
from vexor.verify import VerifyConfig

from conftest import corpus_function

MUL = """func @m(%x: i8, %y: i8) -> i8 {
entry:
  %0 = mul %x, 8 : i8
  %1 = xor %0, %y : i8
  ret %1
}"""
FAST = OptConfig(synth=SynthConfig(max_insts=1, timeout=20.0))


def ops(f):
    return [i.op for _, i in f.instructions()]


def test_mul_by_eight_end_to_end():
    g, rep = optimize_function(parse_function(MUL), FAST)
    assert "shl %x, 3 : i8" in print_function(g)
    assert "mul" not in ops(g)
    assert rep.rewrites_applied == 1
    assert rep.uops_after < rep.uops_before


def test_pointer_only_function_is_untouched():
    f = parse_function("func @p(%p: ptr, %q: ptr) -> i8 {\nentry:\n  ret 0\n}")
    g, rep = optimize_function(f, FAST)
    assert g == f and rep.examined == 0


def test_apply_rewrite_removes_dead_original():
    f = parse_function(MUL)
    g = apply_rewrite(f, "0", parse_rewrite("(shl (val i8 %x), (const i8 3))"))
    assert ops(g) == ["shl", "xor"]
    assert not validate(g)


def test_leaf_view_inserts_one_bitcast():
    f = parse_function("""func @v(%x: <32 x i8>) -> <32 x i8> {
entry:
  %0 = lshr %x, 1 : <32 x i8>
  ret %0
}""")
    r = parse_rewrite("(bitcast (avx2.psrli.d (bitcast (val <32 x i8> %x), <8 x i32>), (const i32 1)), <32 x i8>)")
    g = apply_rewrite(f, "0", r)
    insts = [i for _, i in g.instructions()]
    assert [i.op for i in insts] == ["bitcast", "call", "bitcast"]
    assert str(insts[0].ty) == "<8 x i32>"
    assert insts[-1].dest == "0"


def test_root_shape_gets_a_bitcast():
    f = parse_function("""func @v(%x: <8 x i8>) -> <8 x i8> {
entry:
  %0 = add %x, %x : <8 x i8>
  ret %0
}""")
    r = parse_rewrite("(mmx.pslli.w (val <4 x i16> %x), (const i32 0))")
    g = apply_rewrite(f, "0", r)
    last = [i for _, i in g.instructions()][-1]
    assert last.op == "bitcast" and str(last.ty) == "<8 x i8>" and last.dest == "0"


def test_non_dominating_binding_is_rejected():
    f = parse_function(MUL)
    with pytest.raises(RewriteRejected):
        apply_rewrite(f, "0", parse_rewrite("(val i8 %z)"), {"z": Ref("1")})


def test_dce_keeps_stores():
    f = parse_function("func @s(%x: i8, %p: ptr) -> i8 {\nentry:\n  %0 = add %x, 1 : i8\n  store %0, %p\n  %1 = mul %x, 3 : i8\n  ret %x\n}")
    assert ops(dead_code_elimination(f)) == ["add", "store"]


def test_eligible_values_skip_params_and_stores():
    f = parse_function("func @s(%x: i8, %p: ptr) -> i8 {\nentry:\n  %0 = add %x, 1 : i8\n  store %0, %p\n  ret %0\n}")
    assert eligible_values(f) == ["0"]


def test_report_conservation_and_rendering(tmp_path):
    g, rep = optimize_function(corpus_function("ex3"), FAST)
    assert rep.examined == sum(rep.count(k) for k in OUTCOMES)
    assert rep.rewrites_applied == sum(o.applied for o in rep.outcomes)
    text = render([rep], "text")
    assert text.splitlines()[0].split("\t") == list(COLUMNS)
    data = json.loads(render([rep], "json"))
    assert data[0]["uops_before"] == 11 and data[0]["uops_after"] == 4
    paths = plot_reports([rep], tmp_path)
    assert [p.name for p in paths] == ["ex3.uops.png", "summary.uops.png"]
    assert all(p.read_bytes()[:4] == b"\x89PNG" for p in paths)


def test_cache_hits_are_reverified(tmp_path):
    cache = RewriteCache(tmp_path)
    f = parse_function(MUL)
    g1, r1 = optimize_function(f, FAST, cache)
    g2, r2 = optimize_function(f, FAST, RewriteCache(tmp_path))
    assert r2.synth_calls == 0 and g1 == g2
    assert all(o.outcome == CACHE_HIT for o in r2.outcomes)
    hit = [o for o in r2.outcomes if o.rewrite][0]
    assert hit.verdict == "proved-exhaustive"


def test_stale_cache_entry_is_not_applied(tmp_path):
    cache = RewriteCache(tmp_path)
    f = parse_function(MUL)
    optimize_function(f, FAST, cache)
    for p in tmp_path.iterdir():
        p.write_text(p.read_text().replace("(const i8 3)", "(const i8 4)"))
    g, rep = optimize_function(f, FAST, RewriteCache(tmp_path))
    assert "mul" in ops(g) and rep.rewrites_applied == 0


def test_reports_rewrite_outcome():
    _, rep = optimize_function(corpus_function("ex1"),
                               OptConfig(synth=SynthConfig(max_insts=1, verify=VerifyConfig(exhaustive_bits=24))))
    rewrites = [o for o in rep.outcomes if o.outcome == REWRITE]
    assert [(o.cost_before, o.cost_after, o.verdict) for o in rewrites] == [(4, 1, "proved-exhaustive")]
