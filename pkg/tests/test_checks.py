import math

import numpy as np
import pytest

from src.regularity.checks import (
    CHECKS,
    CheckRow,
    check_equivalence,
    check_gradient,
    check_hammer,
    check_hammer2,
    check_lemma_t,
    check_lemma_t_backward,
    check_lemma_t_symmetric,
    check_monotonicity,
    check_young,
    check_young_equality,
    run_assumption_checks,
)
from src.regularity.config import ChecksConfig
from src.regularity.orlicz import GrowthModel, OrliczFunction

SMALL = ChecksConfig(samples=400, gradient_points=100, equiv_points=20)
QUADRATIC = GrowthModel.p_growth(2.0)


def test_check_names_and_order():
    names = [name for name, _ in CHECKS]
    assert names[0] == "delta2"
    assert names[-3:] == ["lemma_t_forward", "lemma_t_backward", "lemma_t_symmetric"]
    assert len(set(names)) == len(names) == 11


def test_quadratic_model_passes_every_check():
    rows = run_assumption_checks(QUADRATIC, SMALL, seed=1)
    assert [r.check for r in rows] == [name for name, _ in CHECKS]
    assert all(r.passed for r in rows), [r for r in rows if not r.passed]
    by_name = {r.check: r for r in rows}
    assert math.isclose(by_name["lemma_t_forward"].min_ratio, 0.5)
    assert math.isclose(by_name["equivalence"].max_ratio, 1.0)
    assert by_name["young"].samples == 400
    assert by_name["gradient"].samples == 100


def test_rows_do_not_depend_on_the_thread_count():
    model = GrowthModel.p_growth(3.0, 0.1)
    one = run_assumption_checks(model, SMALL, seed=42, threads=1)
    many = run_assumption_checks(model, SMALL, seed=42, threads=4)
    assert one == many
    other = run_assumption_checks(model, SMALL, seed=43, threads=1)
    assert other != one


@pytest.mark.parametrize(
    "check",
    [
        check_hammer,
        check_hammer2,
        check_equivalence,
        check_young,
        check_young_equality,
        check_gradient,
        check_lemma_t,
        check_lemma_t_backward,
        check_lemma_t_symmetric,
    ],
)
@pytest.mark.parametrize(
    "model",
    [
        GrowthModel.p_growth(1.5, 0.1),
        GrowthModel.p_growth(4.0),
        GrowthModel.orlicz(OrliczFunction("carreau", 1.5, nu=1.0, nu_inf=0.1, mu=0.5)),
    ],
    ids=lambda m: m.label,
)
def test_individual_checks_pass_for_standard_models(check, model):
    row = check(model, SMALL, np.random.default_rng(5))
    assert row.verdict == "pass", row
    assert row.min_ratio <= row.max_ratio


def test_young_sample_is_capped_for_root_finding_kinds():
    phi = OrliczFunction("carreau", 1.5, nu=1.0, nu_inf=0.1, mu=0.5)
    cfg = ChecksConfig(samples=5_000)
    row = check_young(GrowthModel.orlicz(phi), cfg, np.random.default_rng(0))
    assert row.samples == 2_000


def test_check_row_serializes():
    row = CheckRow("young", 10, -1e-12, 3.0, "pass")
    assert row.passed
    assert row.as_dict() == {
        "check": "young",
        "samples": 10,
        "min_ratio": -1e-12,
        "max_ratio": 3.0,
        "verdict": "pass",
    }
    assert not CheckRow("young", 10, 0.0, 1.0, "fail").passed


@pytest.mark.slow
@pytest.mark.parametrize("mu", [0.0, 0.1, 1.0])
@pytest.mark.parametrize("p", [1.25, 1.5, 2.0, 3.0, 4.0])
def test_core_checks_across_the_model_grid(p, mu):
    model = GrowthModel.p_growth(p, mu)
    cfg = ChecksConfig()
    assert cfg.samples == 10_000

    mono = check_monotonicity(model, cfg, np.random.default_rng(17))
    # pass means the envelope of 10^4 samples is within 10% of the one of 2 x 10^4
    assert mono.min_ratio > 0.0
    assert mono.verdict == "pass", mono

    lemma = check_lemma_t(model, cfg, np.random.default_rng(18))
    assert lemma.min_ratio > 0.0 and lemma.verdict == "pass", lemma
    if p == 2.0 and mu == 0.0:
        assert abs(lemma.min_ratio - 0.5) <= 1e-12
        assert abs(lemma.max_ratio - 0.5) <= 1e-12

    young = check_young(model, cfg, np.random.default_rng(19))
    assert young.min_ratio >= -1e-8 and young.verdict == "pass", young

