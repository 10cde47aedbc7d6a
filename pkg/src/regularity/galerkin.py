"""Ritz-Galerkin solver on a trigonometric basis.

The ansatz u_m(t, x) = sum_j c_j(t) psi_j(x) turns the equation into the ODE system

    M c' = b(t) - N(c),   N(c)_k = <A(grad u_m), grad psi_k>,   b_k = <f, psi_k>,

integrated with an implicit stiff stepper. Inner products use composite Gauss-Legendre
quadrature, so the nonlinear form is integrated well beyond the basis resolution.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import integrate, linalg

from .errors import InputError, SolverError
from .expressions import ClosedForm
from .grids import Field, SpaceTimeGrid, norms
from .solver import ProblemSpec, SolverConfig, solve

__all__ = [
    "TrigBasis",
    "GalerkinResult",
    "SolverComparison",
    "galerkin_solve",
    "compare_solvers",
    "richardson_solution",
]

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

MAX_MODES = {1: 256, 2: 24}


def _family(boundary: str, m: int, length: float, x: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Values and derivatives of the first m 1-d basis functions at x, shape (len(x), m)."""
    vals = np.empty((x.size, m))
    ders = np.empty((x.size, m))
    if boundary == "dirichlet":
        for j in range(m):
            k = (j + 1) * np.pi / length
            vals[:, j] = np.sin(k * x)
            ders[:, j] = k * np.cos(k * x)
        return vals, ders
    for j in range(m):
        if j == 0:
            vals[:, j], ders[:, j] = 1.0, 0.0
            continue
        k = 2.0 * np.pi * ((j + 1) // 2) / length
        if j % 2:
            vals[:, j] = np.cos(k * x)
            ders[:, j] = -k * np.sin(k * x)
        else:
            vals[:, j] = np.sin(k * x)
            ders[:, j] = k * np.cos(k * x)
    return vals, ders


def _gauss_points(length: float, cells: int, order: int) -> tuple[FloatArray, FloatArray]:
    ref, ref_w = np.polynomial.legendre.leggauss(order)
    h = length / cells
    left = h * np.arange(cells)
    x = (left[:, None] + 0.5 * h * (ref[None, :] + 1.0)).ravel()
    w = np.tile(0.5 * h * ref_w, cells)
    return x, w


@dataclass(frozen=True, eq=False)
class TrigBasis:
    """Sine (Dirichlet) or Fourier (periodic) basis, tensorized in 2-d.

    ``values`` is (points, modes) and ``gradients`` (points, modes, n) on the tensor
    grid spanned by ``axes`` (one coordinate array per space axis, points ordered
    ix * ny + iy).
    """

    modes: int
    values: FloatArray
    gradients: FloatArray

    @classmethod
    def build(
        cls, grid: SpaceTimeGrid, m: int, axes: tuple[FloatArray, ...]
    ) -> "TrigBasis":
        fams = [_family(grid.boundary, m, grid.lengths[i], axes[i]) for i in range(grid.dim)]
        if grid.dim == 1:
            vals, ders = fams[0]
            return cls(m, vals, ders[:, :, None])
        (vx, dx), (vy, dy) = fams
        # modes ordered jx * m + jy
        vals = np.einsum("aj,bk->abjk", vx, vy).reshape(vx.shape[0] * vy.shape[0], m * m)
        gx = np.einsum("aj,bk->abjk", dx, vy).reshape(vals.shape)
        gy = np.einsum("aj,bk->abjk", vx, dy).reshape(vals.shape)
        return cls(m * m, vals, np.stack([gx, gy], axis=-1))


@dataclass(frozen=True)
class GalerkinResult:
    modes: int
    times: FloatArray
    coefficients: FloatArray
    field: Field


@dataclass(frozen=True)
class SolverComparison:
    discrepancy: float
    relative: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.relative <= self.tolerance


def _quadrature(
    grid: SpaceTimeGrid, m: int, order: int
) -> tuple[tuple[FloatArray, ...], FloatArray]:
    """Per-axis Gauss-Legendre nodes and the tensorized weights."""
    cells = max(4, 2 * m)
    rules = [_gauss_points(grid.lengths[i], cells, order) for i in range(grid.dim)]
    axes = tuple(r[0] for r in rules)
    weights = rules[0][1] if grid.dim == 1 else np.outer(rules[0][1], rules[1][1]).ravel()
    return axes, weights


def _tensor_points(axes: tuple[FloatArray, ...]) -> list[FloatArray]:
    return [c.ravel() for c in np.meshgrid(*axes, indexing="ij")]


def galerkin_solve(
    spec: ProblemSpec, cfg: SolverConfig, m: int | None = None
) -> GalerkinResult:
    """Integrate the Galerkin system and reconstruct u_m on the grid times and nodes.

    Args:
        spec: Problem with closed-form u0 and forcing.
        cfg: Mode count, quadrature size and the ODE tolerances.
        m: Modes per axis; overrides ``cfg.galerkin_modes``.

    Returns:
        Mode coefficients at the grid times and the field they reconstruct.
    """
    grid, model = spec.grid, spec.model
    m = cfg.galerkin_modes if m is None else m
    if not 1 <= m <= MAX_MODES[grid.dim]:
        raise InputError(f"{m} modes outside 1..{MAX_MODES[grid.dim]} for a {grid.dim}-d grid")
    if not isinstance(spec.u0, ClosedForm):
        raise InputError("the Galerkin solver needs a closed-form initial datum")
    if spec.forcing is not None and not isinstance(spec.forcing, ClosedForm):
        raise InputError("the Galerkin solver needs closed-form forcing")
    forcing = spec.forcing

    axes, weights = _quadrature(grid, m, cfg.quadrature_points)
    points = _tensor_points(axes)
    basis = TrigBasis.build(grid, m, axes)
    N = grid.components
    psi, dpsi = basis.values, basis.gradients
    w_psi = weights[:, None] * psi
    mass = psi.T @ w_psi
    factor = linalg.cho_factor(mass)

    def project(values: FloatArray) -> FloatArray:
        return linalg.cho_solve(factor, w_psi.T @ values)

    def load(t: float) -> FloatArray:
        if forcing is None:
            return np.zeros((basis.modes, N))
        return w_psi.T @ forcing.evaluate(np.float64(t), points)

    w_dpsi = weights[:, None, None] * dpsi

    def rhs(t: float, c: FloatArray) -> FloatArray:
        coef = c.reshape(basis.modes, N)
        grad = np.einsum("qji,jc->qci", dpsi, coef)
        stress = model.stress(grad)
        nonlinear = np.einsum("qci,qki->kc", stress, w_dpsi)
        return linalg.cho_solve(factor, load(t) - nonlinear).ravel()

    def jac(t: float, c: FloatArray) -> FloatArray:
        coef = c.reshape(basis.modes, N)
        grad = np.einsum("qji,jc->qci", dpsi, coef)
        da = model.stress_jacobian(grad, cfg.jacobian_regularization)
        block = np.einsum("qki,qcidl,qjl->kcjd", w_dpsi, da, dpsi, optimize=True)
        size = basis.modes * N
        solved = linalg.cho_solve(factor, block.reshape(basis.modes, N * size))
        return -solved.reshape(size, size)

    c0 = project(spec.u0.evaluate(np.float64(0.0), points))
    sol = integrate.solve_ivp(
        rhs,
        (0.0, grid.t_final),
        c0.ravel(),
        method="BDF",
        t_eval=grid.times,
        rtol=cfg.galerkin_rtol,
        atol=cfg.galerkin_atol,
        jac=jac,
    )
    if not sol.success:
        failed_at = float(sol.t[-1]) if sol.t.size else 0.0
        raise SolverError(f"Galerkin integration failed: {sol.message}", time=failed_at)
    logger.debug("galerkin m=%d: %d rhs evaluations, %d jacobians", m, sol.nfev, sol.njev)

    coefficients = sol.y.T.reshape(-1, basis.modes, N)
    nodes = tuple(grid.coords(i) for i in range(grid.dim))
    on_grid = TrigBasis.build(grid, m, nodes).values
    values = np.einsum("gj,tjc->tgc", on_grid, coefficients)
    field = Field(grid, values.reshape(grid.shape))
    return GalerkinResult(m, sol.t, coefficients, field)


def richardson_solution(spec: ProblemSpec, cfg: SolverConfig) -> Field:
    """Backward Euler on dt and dt/2 combined into a second order in time field.

    Args:
        spec: Closed-form scenario; it is re-solved with twice as many steps.
        cfg: Newton settings for both marches.

    Returns:
        ``2 u_{dt/2} - u_dt`` on the time levels of ``spec.grid``.
    """
    coarse = solve(spec, cfg).field
    fine = solve(spec.with_grid(spec.grid.refined(space=1, time=2)), cfg).field
    return coarse.replace(2.0 * fine.values[::2] - coarse.values)


def compare_solvers(
    spec: ProblemSpec, cfg: SolverConfig, m: int | None = None
) -> SolverComparison:
    """Space-time L^2 discrepancy between the finite-difference and Galerkin solutions.

    The finite-difference side is Richardson-extrapolated to second order in time.

    Args:
        spec: Closed-form scenario on a periodic or Dirichlet grid.
        cfg: Solver settings; ``compare_tolerance`` bounds the relative discrepancy.
        m: Modes per axis, ``cfg.galerkin_modes`` when omitted.

    Returns:
        Absolute and relative discrepancy with the pass tolerance.
    """
    fd = richardson_solution(spec, cfg)
    gal = galerkin_solve(spec, cfg, m).field
    discrepancy = norms(fd.replace(fd.values - gal.values), "L2")
    size = max(norms(fd, "L2"), norms(gal, "L2"))
    relative = discrepancy / size if size > 0.0 else discrepancy
    return SolverComparison(discrepancy, relative, cfg.compare_tolerance)
