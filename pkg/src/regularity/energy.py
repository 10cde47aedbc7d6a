"""Discrete energy diagnostics for computed trajectories.

Three a-priori estimates are evaluated on the stored trajectory, each as a left/right
pair with the implied empirical constant:

* time, first order:  int_a^T |u_t|^2 + sup_(a,T) int F(Du)
  against (1/a) int_0^T phi(|Du|) + |f|^2
* time, second order: int_2a^T |d_t V(Du)|^2 + sup_[2a,T] int |u_t|^2
  against int_a^T |f_t|^2 + (1/a) int_a^T |u_t|^2
* space:              int_a^T |grad V(Du)|^2 + sup_[a,T] int |grad u|^2
  against int_0^T phi*(|grad f|) + phi(|grad u|)

Derivatives are central differences of the nodal values. On Dirichlet boundaries u and
u_t see their zero boundary values; V(Du) and f use one-sided differences there.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import InputError
from .grids import Field, central_gradient, norms, space_norms, time_derivative
from .orlicz import GrowthModel, conjugate
from .solver import ProblemSpec

__all__ = ["EnergyReport", "EstimatePair", "energy_report"]

FloatArray = NDArray[np.float64]

_EPS = 1e-9


@dataclass(frozen=True)
class EstimatePair:
    name: str
    lhs: float
    rhs: float

    @property
    def constant(self) -> float:
        if self.rhs == 0.0:
            return 0.0 if self.lhs == 0.0 else math.inf
        return self.lhs / self.rhs


@dataclass(frozen=True)
class EnergyReport:
    trim: float
    ut_sq: float
    sup_F: float
    dtV_sq: float
    gradV_sq: float
    sup_ut_sq: float
    sup_grad_sq: float
    rhs_time: float
    rhs_ft: float
    rhs_space: float
    grad_ut_p: float | None = None
    pairs: tuple[EstimatePair, ...] = field(default=())

    def rows(self) -> list[tuple[str, float]]:
        out = [
            ("trim", self.trim),
            ("int_ut_sq", self.ut_sq),
            ("sup_int_F", self.sup_F),
            ("int_dtV_sq", self.dtV_sq),
            ("int_gradV_sq", self.gradV_sq),
            ("sup_int_ut_sq", self.sup_ut_sq),
            ("sup_int_grad_sq", self.sup_grad_sq),
            ("rhs_phi_Du_plus_f_sq", self.rhs_time),
            ("rhs_ft_sq", self.rhs_ft),
            ("rhs_phistar_gradf_plus_phi_gradu", self.rhs_space),
        ]
        if self.grad_ut_p is not None:
            out.append(("int_grad_ut_p", self.grad_ut_p))
        for pair in self.pairs:
            out += [
                (f"{pair.name}_lhs", pair.lhs),
                (f"{pair.name}_rhs", pair.rhs),
                (f"{pair.name}_constant", pair.constant),
            ]
        return out

    def left_hand_sides(self) -> tuple[float, ...]:
        return (
            self.ut_sq,
            self.sup_F,
            self.dtV_sq,
            self.gradV_sq,
            self.sup_ut_sq,
            self.sup_grad_sq,
        )


def _window(f: Field, lo: float, hi: float = math.inf) -> Field:
    dt = f.grid.dt
    keep = (f.times >= lo - _EPS * dt) & (f.times <= hi + _EPS * dt)
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        raise InputError(f"no stored time levels in [{lo}, {hi}]")
    return f.replace(f.values[idx[0] : idx[-1] + 1], t0=float(f.times[idx[0]]))


def _density(f: Field, values: FloatArray) -> Field:
    """Wrap a non-negative pointwise density (one value per node) as a field."""
    return f.replace(np.asarray(values, dtype=np.float64)[..., None])


def _integral(density: Field) -> float:
    return norms(density, "Lq", q=1.0)


def _sup_integral(density: Field) -> float:
    return float(np.max(space_norms(density, q=1.0), initial=0.0))


def _sq(values: FloatArray) -> FloatArray:
    return np.sum(values * values, axis=-1)


def _v_of_gradient(model: GrowthModel, grad: Field) -> Field:
    return grad.replace(model.v(grad.matrices()).reshape(grad.values.shape))


def energy_report(u: Field, spec: ProblemSpec, trim: float) -> EnergyReport:
    """Evaluate the three estimates on the trajectory ``u`` with interior margin ``trim``.

    Args:
        u: Full solved trajectory, nt + 1 time levels.
        spec: Problem the trajectory solves; supplies the model and the forcing.
        trim: Margin a cut from both ends, between 2 dt and T / 2.

    Returns:
        Left and right hand sides of each estimate with their ratios.

    Raises:
        InputError: The margin is out of range or ``u`` is a partial trajectory.
    """
    grid, model = u.grid, spec.model
    if trim < 2.0 * grid.dt - _EPS * grid.dt:
        raise InputError("trim margin must be at least two time steps")
    if 2.0 * trim >= grid.t_final:
        raise InputError("trim margin must be smaller than half the horizon")
    if u.n_times != grid.nt + 1:
        raise InputError("energy diagnostics need the full trajectory")
    phi = model.growth

    if spec.forcing is None:
        forcing = Field.zeros(grid)
    elif isinstance(spec.forcing, Field):
        forcing = spec.forcing
    else:
        forcing = spec.forcing.sample(grid)

    grad = central_gradient(u)
    grad_mag = np.sqrt(_sq(grad.values))
    energy = _density(grad, np.asarray(model.energy(grad.matrices())))
    phi_du = _density(grad, np.asarray(phi.value(grad_mag)))
    v = _v_of_gradient(model, grad)

    ut = time_derivative(u)
    ut_sq = _density(ut, _sq(ut.values))
    dtv = time_derivative(v)
    gradv = central_gradient(v, zero_boundary=False)
    f_sq = _density(forcing, _sq(forcing.values))
    ft = time_derivative(forcing)
    grad_f = central_gradient(forcing, zero_boundary=False)
    phistar = _density(grad_f, np.asarray(conjugate(phi, np.sqrt(_sq(grad_f.values)))))

    a = trim
    report_terms = dict(
        ut_sq=_integral(_window(ut_sq, a)),
        sup_F=_sup_integral(_window(energy, a)),
        dtV_sq=_integral(_window(_density(dtv, _sq(dtv.values)), 2.0 * a)),
        gradV_sq=_integral(_window(_density(gradv, _sq(gradv.values)), a)),
        sup_ut_sq=_sup_integral(_window(ut_sq, 2.0 * a)),
        sup_grad_sq=_sup_integral(_window(_density(grad, _sq(grad.values)), a)),
    )
    rhs_time = (_integral(phi_du) + _integral(f_sq)) / a
    rhs_ft = _integral(_window(_density(ft, _sq(ft.values)), a))
    rhs_space = _integral(phistar) + _integral(phi_du)

    grad_ut_p = None
    if model.variant == "p_growth" and model.p <= 2.0:
        gut = central_gradient(ut)
        mag = np.sqrt(_sq(gut.values))
        grad_ut_p = _integral(_window(_density(gut, np.power(mag, model.p)), a))

    t = report_terms
    pairs = (
        EstimatePair("time_first", t["ut_sq"] + t["sup_F"], rhs_time),
        EstimatePair(
            "time_second", t["dtV_sq"] + t["sup_ut_sq"], rhs_ft + t["ut_sq"] / a
        ),
        EstimatePair("space", t["gradV_sq"] + t["sup_grad_sq"], rhs_space),
    )
    return EnergyReport(
        trim=a,
        rhs_time=rhs_time,
        rhs_ft=rhs_ft,
        rhs_space=rhs_space,
        grad_ut_p=grad_ut_p,
        pairs=pairs,
        **report_terms,
    )
