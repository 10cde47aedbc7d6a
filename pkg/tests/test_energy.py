import math

import numpy as np
import pytest

from src.regularity.energy import EstimatePair, energy_report
from src.regularity.errors import InputError
from src.regularity.expressions import Expression
from src.regularity.grids import Field, SpaceTimeGrid
from src.regularity.orlicz import GrowthModel
from src.regularity.solver import ProblemSpec, SolverConfig, solve


def _trajectory(p: float, forcing: str | None = None):
    model = GrowthModel.p_growth(p, 0.1)
    grid = SpaceTimeGrid.uniform(24, 1.0, 40, 0.2, boundary="dirichlet")
    spec = ProblemSpec(
        model,
        grid,
        Expression.parse("sin(pi*x)"),
        forcing=Expression.parse(forcing) if forcing else None,
    )
    return solve(spec, SolverConfig()).field, spec


def test_estimate_pair_constant():
    assert EstimatePair("x", 2.0, 4.0).constant == 0.5
    assert EstimatePair("x", 0.0, 0.0).constant == 0.0
    assert EstimatePair("x", 1.0, 0.0).constant == math.inf


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_report_is_finite_and_positive(p):
    u, spec = _trajectory(p, forcing="t*sin(2*pi*x)")
    report = energy_report(u, spec, trim=0.025)
    assert all(v > 0.0 and math.isfinite(v) for v in report.left_hand_sides())
    assert [pair.name for pair in report.pairs] == ["time_first", "time_second", "space"]
    for pair in report.pairs:
        assert 0.0 < pair.constant < math.inf
    assert (report.grad_ut_p is not None) == (p <= 2.0)


def test_rows_expose_every_term():
    u, spec = _trajectory(2.0)
    names = [name for name, _ in energy_report(u, spec, trim=0.05).rows()]
    assert names[:3] == ["trim", "int_ut_sq", "sup_int_F"]
    assert "int_grad_ut_p" in names
    assert "space_constant" in names
    assert len(names) == len(set(names))


def test_zero_trajectory_gives_zero_terms():
    model = GrowthModel.p_growth(3.0)
    grid = SpaceTimeGrid.uniform(8, 1.0, 10, 1.0)
    spec = ProblemSpec(model, grid, Expression.zero())
    report = energy_report(Field.zeros(grid), spec, trim=0.2)
    assert report.left_hand_sides() == (0.0,) * 6
    assert all(pair.constant == 0.0 for pair in report.pairs)


def test_trim_margin_is_validated():
    u, spec = _trajectory(2.0)
    dt = u.grid.dt
    with pytest.raises(InputError):
        energy_report(u, spec, trim=dt)
    with pytest.raises(InputError):
        energy_report(u, spec, trim=0.1)
    with pytest.raises(InputError):
        energy_report(u.replace(u.values[:-1]), spec, trim=0.05)


def test_sampled_forcing_is_accepted():
    grid = SpaceTimeGrid.uniform(8, 1.0, 10, 1.0)
    forcing = Field(grid, np.ones(grid.shape))
    spec = ProblemSpec(GrowthModel.p_growth(2.0), grid, Expression.zero(), forcing=forcing)
    report = energy_report(Field.zeros(grid), spec, trim=0.2)
    # (1/a) int_0^T |f|^2 with |f| = 1 on a unit box over T = 1
    assert math.isclose(report.rhs_time, 1.0 / 0.2)


def test_dirichlet_gradient_of_v_is_one_sided_at_the_boundary():
    # V(Du) does not vanish on the boundary; a zero ghost value would make
    # int |grad V|^2 grow like 1/dx under refinement
    u, spec = _trajectory(3.0)
    coarse = energy_report(u, spec, trim=0.05).gradV_sq
    fine_spec = spec.with_grid(spec.grid.refined(2, 1))
    fine = solve(fine_spec, SolverConfig()).field
    assert energy_report(fine, fine_spec, trim=0.05).gradV_sq < 1.5 * coarse


@pytest.mark.slow
@pytest.mark.parametrize(
    ("p", "boundary"), [(1.5, "periodic"), (3.0, "periodic"), (3.0, "dirichlet")]
)
def test_constants_are_stable_under_refinement(p, boundary):
    model = GrowthModel.p_growth(p, 0.1)
    u0 = "sin(2*pi*x)" if boundary == "periodic" else "sin(pi*x)"
    grid = SpaceTimeGrid.uniform(32, 1.0, 64, 0.2, boundary=boundary)
    spec = ProblemSpec(
        model, grid, Expression.parse(u0), forcing=Expression.parse("t*sin(2*pi*x)")
    )
    constants = []
    for current in (spec, spec.with_grid(grid.refined(2, 2))):
        u = solve(current, SolverConfig()).field
        report = energy_report(u, current, trim=0.025)
        constants.append({pair.name: pair.constant for pair in report.pairs})
    coarse, fine = constants
    for name in coarse:
        assert abs(fine[name] / coarse[name] - 1.0) <= 0.2, name
