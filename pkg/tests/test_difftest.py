import pytest

from vexor import intrinsics
from vexor.difftest import (EXTRA_SHAPES, DiffReport, _systematic, boundary_values, check_rows, difftest,
                            shift_amounts)


def test_shipped_semantics_agree():
    rep = difftest(5000, seed=3)
    assert rep.ok, [str(d) for d in rep.disagreements]
    assert rep.descriptors == len(intrinsics.registry()) + len(EXTRA_SHAPES)
    assert rep.random_rows == 5000


@pytest.mark.parametrize("name", sorted(intrinsics.MUTATIONS))
def test_every_mutation_is_caught(name):
    rep = difftest(2000, seed=0, mutate=name)
    assert not rep.ok
    # the kernels are restored afterwards
    assert difftest(200, seed=0, names=["mmx.pavg.b", "sse2.psrai.w", "avx512.mask.pavg.w"]).ok


def test_wrapping_pavg_caught_at_top_values():
    desc = intrinsics.lookup("mmx.pavg.b")
    assert any(r[0][0] == 255 and r[1][0] == 255 for r in _systematic(desc))
    top = [[[255] * 8, [255] * 8]]
    with intrinsics.mutation("pavg-wrapping-sum"):
        assert check_rows("mmx.pavg.b", desc, top, DiffReport()) == 1
    assert check_rows("mmx.pavg.b", desc, top, DiffReport()) == 0


def test_zero_fill_psrai_caught_on_negative_lane():
    rep = difftest(1, mutate="psrai-zero-fill", names=["sse2.psrai.w"])
    assert rep.disagreements
    assert all(any(v is not None and v >> 15 for v in d.operands[0]) for d in rep.disagreements)


def test_systematic_values():
    assert boundary_values(8) == [0, 1, 2, 85, 127, 128, 129, 170, 254, 255]
    assert {0, 31, 32, 33} <= set(shift_amounts(32))


def test_iterations_must_be_positive():
    with pytest.raises(ValueError):
        difftest(0)
