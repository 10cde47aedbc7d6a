import math

import numpy as np
import pytest
from scipy import integrate

from src.regularity.errors import InputError, RangeError
from src.regularity.expressions import Expression
from src.regularity.grids import SpaceTimeGrid, as_time_series
from src.regularity.nikolskij import (
    DieningReport,
    QuotientCurve,
    RegularityConfig,
    RegularityReport,
    averaged_characterization_check,
    embedding_table,
    estimate_exponent,
    geometric_ladder,
    nikolskij_seminorm,
    predict_beta,
    quotient_norm_curve,
    sobolev_embedding_exponent,
    ut_regularity_experiment,
)
from src.regularity.orlicz import GrowthModel
from src.regularity.solver import ProblemSpec

DT = 1.0 / 1024


def _series(fn):
    t = DT * np.arange(1025)
    return as_time_series(fn(t), dt=DT)


def _report(alpha_hat: float, predicted: float | None, saturated: bool = False):
    return RegularityReport(
        "time", 2.0, alpha_hat, 0.0, 1.0, 0.1, 1.0, 1.0, saturated, predicted
    )


def test_geometric_ladder():
    np.testing.assert_allclose(geometric_ladder(0.1, 4), [0.1, 0.2, 0.4, 0.8])


def test_heaviside_in_time_has_exponent_one_half():
    g = _series(lambda t: (t >= 0.5).astype(float))
    curve = quotient_norm_curve(g, "time", 2.0, geometric_ladder(DT, 7))
    np.testing.assert_allclose(curve.norms, np.sqrt(curve.steps), rtol=1e-12)
    report = estimate_exponent(curve)
    assert abs(report.alpha_hat - 0.5) <= 0.02
    assert report.r2 > 0.999
    assert not report.saturated
    assert math.isclose(report.seminorm, 1.0, rel_tol=1e-6)


def test_lq_exponent_of_a_jump():
    # ||Delta^h H||_q = h^{1/q}
    g = _series(lambda t: (t >= 0.5).astype(float))
    curve = quotient_norm_curve(g, "time", 4.0, geometric_ladder(DT, 6))
    assert abs(estimate_exponent(curve).alpha_hat - 0.25) <= 0.02


def test_lipschitz_data_saturate():
    curve = quotient_norm_curve(_series(lambda t: 3.0 * t), "time", 2.0, geometric_ladder(DT, 6))
    report = estimate_exponent(curve)
    assert report.saturated
    assert report.verdict == "saturated"
    assert abs(report.alpha_hat - 1.0) <= 0.02


def _cusp_oracle(steps, t0: float, power: float, points: int = 2**20):
    """Trapezoid quadrature of int_0^{1-h} |g(t+h) - g(t)|^2 on a fine reference grid."""
    t = np.arange(points + 1) / points
    g = np.abs(t - t0) ** power
    out = []
    for h in steps:
        k = round(h * points)
        d = g[k:] - g[:-k]
        out.append(math.sqrt(integrate.trapezoid(d * d, dx=1.0 / points)))
    return np.asarray(out)


def test_cusp_exponent_matches_brute_force_quadrature():
    t0 = 0.5 + DT / 3
    g = _series(lambda t: np.abs(t - t0) ** 0.75)
    ladder = geometric_ladder(DT, 7)
    report = estimate_exponent(quotient_norm_curve(g, "time", 2.0, ladder))
    oracle = _cusp_oracle(ladder, t0, 0.75)
    expected = float(np.polyfit(np.log(ladder), np.log(oracle), 1)[0])
    # 0.75 + 1/q with q = 2 reaches the Lipschitz ceiling
    assert expected > 0.9
    assert abs(report.alpha_hat - expected) <= 0.03


def test_sine_saturates_at_one():
    g = _series(lambda t: np.sin(2 * np.pi * t))
    report = estimate_exponent(quotient_norm_curve(g, "time", 2.0, geometric_ladder(DT, 7)))
    assert abs(report.alpha_hat - 1.0) <= 0.05
    assert report.saturated


def test_constant_data_saturate_with_zero_norms():
    curve = quotient_norm_curve(_series(lambda t: 0.0 * t + 2.0), "time", 2.0, geometric_ladder(DT, 5))
    report = estimate_exponent(curve)
    assert report.saturated and report.alpha_hat == 1.0
    assert math.isnan(report.r2)
    assert report.seminorm == 0.0


def test_fit_needs_four_points():
    curve = QuotientCurve("time", 2.0, 0.0, geometric_ladder(1.0, 5), np.ones(5))
    with pytest.raises(InputError):
        estimate_exponent(curve, window=(2.0, 8.0))
    assert estimate_exponent(curve, window=(2.0, 16.0)).h_min == 2.0


def test_ladder_must_increase():
    with pytest.raises(InputError):
        QuotientCurve("time", 2.0, 0.0, np.array([1.0, 0.5]), np.ones(2))


def test_seminorm_is_the_max_over_the_ladder():
    steps = geometric_ladder(0.01, 5)
    curve = QuotientCurve("space", 2.0, 0.0, steps, 3.0 * steps**0.5, axis=1)
    assert curve.label == "space_x2"
    assert math.isclose(nikolskij_seminorm(curve, 0.5), 3.0)
    assert math.isclose(nikolskij_seminorm(curve, 0.25), 3.0 * 0.16**0.25)


def test_verdicts_and_margin():
    assert _report(0.46, 0.5).verdict == "pass"
    assert _report(0.44, 0.5).verdict == "fail"
    assert math.isclose(_report(0.44, 0.5).margin, -0.06)
    assert _report(0.1, None).verdict == "n/a"
    assert _report(0.1, None).margin is None
    assert _report(0.99, 0.5, saturated=True).verdict == "saturated"


def test_diening_report_factors():
    report = DieningReport(k_avg=2.0, k_plain=6.2, alpha=0.5, H=0.1)
    assert math.isclose(report.factor, 3.1)
    assert report.passed
    assert math.isclose(report.proven_factor, 1.0 + 2.0**1.5)
    assert not DieningReport(k_avg=2.0, k_plain=6.4, alpha=0.5, H=0.1).passed
    assert DieningReport(0.0, 0.0, 0.5, 0.1).factor == 0.0


def test_averaged_characterization_on_linear_data():
    g = _series(lambda t: t)
    report = averaged_characterization_check(g, 0.5, 2.0, 8 * DT, window=(0.25, 0.75))
    # K_plain = sqrt(4 dt) C and K_avg = 9 / (2 sqrt 8) sqrt(dt) C
    assert math.isclose(report.factor, 4.0 * math.sqrt(8.0) / 9.0, rel_tol=1e-9)
    assert report.passed


@pytest.mark.parametrize(
    "fn",
    [
        lambda t: (t >= 0.5).astype(float),
        lambda t: np.abs(t - 0.5 - DT / 3) ** 0.75,
        lambda t: np.sin(2 * np.pi * t),
        lambda t: t,
    ],
    ids=["jump", "cusp", "sine", "linear"],
)
def test_plain_constant_is_within_three_averaged_constants(fn):
    report = averaged_characterization_check(_series(fn), 0.5, 2.0, 8 * DT)
    assert report.k_plain <= 3.0 * report.k_avg * 1.05
    assert report.passed


def test_averaged_characterization_on_rough_signals():
    rng = np.random.default_rng(11)
    for _ in range(100):
        g = as_time_series(rng.standard_normal(257), dt=1.0 / 256)
        report = averaged_characterization_check(g, 0.5, 2.0, 8 / 256)
        assert report.passed, report


def test_averaged_characterization_rejects_bad_windows():
    g = _series(lambda t: t)
    with pytest.raises(InputError):
        averaged_characterization_check(g, 0.5, 2.0, 1.5 * DT)
    with pytest.raises(InputError):
        averaged_characterization_check(g, 0.5, 2.0, DT)
    with pytest.raises(RangeError):
        averaged_characterization_check(g, 0.5, 2.0, 8 * DT, window=(0.5, 0.999))


def test_predictions():
    assert predict_beta(3.0, 1, "time").beta == 0.5
    assert predict_beta(1.5, 2, "space_whole").beta == 0.25
    assert math.isclose(predict_beta(8.0, 1, "space_refined_case_a").beta, 0.375)
    assert predict_beta(3.0, 1, "space_refined_case_a").beta == 0.5
    assert predict_beta(1.5, 1, "space_refined_case_b").beta == 0.5
    assert math.isclose(predict_beta(1.2, 6, "space_refined_case_b").beta, 1.0 / 3.0)
    assert predict_beta(2.0, 3, "space_refined_case_a").beta == predict_beta(
        2.0, 3, "space_refined_case_b"
    ).beta


def test_predictions_outside_their_range():
    out = predict_beta(1.5, 1, "space_refined_case_a")
    assert not out.applies and out.beta is None and out.reason
    assert not predict_beta(3.0, 1, "space_refined_case_b").applies
    with pytest.raises(InputError):
        predict_beta(1.0, 1, "time")
    with pytest.raises(InputError):
        predict_beta(2.0, 0, "time")
    with pytest.raises(InputError):
        predict_beta(2.0, 1, "space_half")  # type: ignore[arg-type]


def test_embedding_exponents():
    assert math.isclose(sobolev_embedding_exponent(2, 0.25, 2.0), 8.0 / 3.0)
    assert math.isclose(sobolev_embedding_exponent(3, 0.25, 2.0), 12.0 / 5.0)
    assert sobolev_embedding_exponent(1, 0.5, 2.0) == math.inf
    with pytest.raises(InputError):
        sobolev_embedding_exponent(2, 1.5, 2.0)
    rows = {row.label: row for row in embedding_table(2)}
    assert math.isclose(rows["space"].exponent, 8.0 / 3.0)
    assert math.isclose(rows["space_time"].exponent, 12.0 / 5.0)
    assert rows["space_refined"].exponent == 4.0


def test_regularity_config_validation():
    with pytest.raises(InputError):
        RegularityConfig(rungs=3)
    with pytest.raises(InputError):
        RegularityConfig(q=0.5)
    with pytest.raises(InputError):
        RegularityConfig(fit_min=3, fit_max=2)


def _smooth_experiment(nx: int, threads: int = 1):
    grid = SpaceTimeGrid.uniform(nx, 1.0, 256, 1.0)
    u = Expression.parse("exp(-t)*sin(2*pi*x) + t*t")
    spec = ProblemSpec(GrowthModel.p_growth(3.0), grid, u)
    return ut_regularity_experiment(u.sample(grid), spec, RegularityConfig(), threads=threads)


def test_experiment_on_smooth_data():
    result = _smooth_experiment(64)
    assert [c.label for c in result.curves] == ["diagonal_x1", "space_x1", "time"]
    assert [r.direction for r in result.reports] == ["diagonal_x1", "space_x1", "time"]
    assert result.passed
    time = result.reports[-1]
    assert time.predicted == 0.5 and time.alpha_hat > 0.9
    space = result.reports[1]
    assert space.predicted == 0.25 and space.refined_prediction == 0.5
    assert result.diening is not None and result.diening.passed
    assert result.diening.H == 8 / 256


def test_experiment_does_not_depend_on_the_thread_count():
    one = _smooth_experiment(64, threads=1)
    many = _smooth_experiment(64, threads=3)
    assert one.reports == many.reports
    for a, b in zip(one.curves, many.curves):
        np.testing.assert_array_equal(a.norms, b.norms)


def test_diagonal_is_skipped_for_incommensurate_steps():
    result = _smooth_experiment(67)
    assert [c.label for c in result.curves] == ["space_x1", "time"]
    assert any("diagonal x1 skipped" in note for note in result.notes)


def test_experiment_trim_must_cover_four_steps():
    grid = SpaceTimeGrid.uniform(16, 1.0, 64, 1.0)
    u = Expression.parse("t*x")
    spec = ProblemSpec(GrowthModel.p_growth(2.0), grid, u)
    with pytest.raises(InputError):
        ut_regularity_experiment(u.sample(grid), spec, RegularityConfig(trim=2.0 / 64))
