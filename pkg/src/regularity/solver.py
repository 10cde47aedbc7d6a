"""Implicit finite-difference solver for u_t - div A(Du) = f.

Each backward Euler step minimizes

    m |u - u_prev|^2 / (2 dt) + E_h(u) - m f(t + dt) . u,   E_h(u) = sum_e w_e F(D_e u)

with damped Newton. In 1-d the elements are the grid edges (forward differences); in
2-d each grid square is split into two P1 triangles, which for p = 2 reproduces the
5-point Laplacian. The mass is lumped, so ``div_h`` is exactly the negative adjoint of
the discrete gradient.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from scipy import sparse, stats
from scipy.sparse.linalg import spsolve

from .errors import InputError, NewtonConvergenceError, SolverError
from .expressions import ClosedForm
from .grids import Field, SpaceTimeGrid, norms, pairwise_sum
from .orlicz import GrowthModel

__all__ = [
    "ProblemSpec",
    "SolverConfig",
    "NewtonStats",
    "Trajectory",
    "ConvergenceStudy",
    "Discretization",
    "step_implicit",
    "solve",
    "discrete_energy",
    "divergence",
    "l2_error",
    "observed_order",
    "convergence_study",
]

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

_TINY = 1e-300
_ARMIJO = 1e-4


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    jacobian_regularization: float = 1e-12
    damping: float = 0.5
    line_search_max: int = 30
    galerkin_modes: int = 16
    galerkin_rtol: float = 1e-8
    galerkin_atol: float = 1e-10
    quadrature_points: int = 8
    compare_tolerance: float = 1e-3

    def __post_init__(self) -> None:
        if not self.newton_tol > 0.0 or self.newton_max_iter < 1:
            raise InputError("newton_tol must be positive and newton_max_iter >= 1")
        if not self.jacobian_regularization >= 0.0:
            raise InputError("jacobian_regularization must be >= 0")
        if not 0.0 < self.damping < 1.0 or self.line_search_max < 1:
            raise InputError("damping must lie in (0, 1) with at least one trial step")
        if self.galerkin_modes < 1 or self.quadrature_points < 2:
            raise InputError("galerkin_modes >= 1 and quadrature_points >= 2 required")
        if not (self.galerkin_rtol > 0.0 and self.galerkin_atol > 0.0):
            raise InputError("galerkin tolerances must be positive")


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A scenario: model, grid, initial datum, forcing and optional exact solution."""

    model: GrowthModel
    grid: SpaceTimeGrid
    u0: ClosedForm | FloatArray
    forcing: ClosedForm | Field | None = None
    exact: ClosedForm | None = None
    label: str = ""

    def __post_init__(self) -> None:
        grid = self.grid
        if isinstance(self.forcing, Field):
            if self.forcing.values.shape != grid.shape:
                raise InputError("sampled forcing does not match the grid")
        elif isinstance(self.forcing, ClosedForm):
            self._check_closed_form(self.forcing, "forcing")
        if isinstance(self.u0, ClosedForm):
            self._check_closed_form(self.u0, "u0")
            if not grid.periodic:
                self._check_boundary(self.u0)
        else:
            arr = np.asarray(self.u0, dtype=np.float64)
            if arr.shape != grid.shape[1:]:
                raise InputError(f"u0 has shape {arr.shape}, expected {grid.shape[1:]}")
            if not np.all(np.isfinite(arr)):
                raise InputError("u0 has non-finite entries")

    def _check_closed_form(self, form: ClosedForm, name: str) -> None:
        if form.dim != self.grid.dim or form.components != self.grid.components:
            raise InputError(
                f"{name} has dim {form.dim} with {form.components} component(s); grid "
                f"has dim {self.grid.dim} with {self.grid.components}"
            )

    def _check_boundary(self, form: ClosedForm) -> None:
        grid = self.grid
        scale = max(1.0, float(np.max(np.abs(self.initial_values()))))
        for axis in range(grid.dim):
            for edge in (0.0, grid.lengths[axis]):
                coords = list(grid.mesh())
                coords[axis] = np.full_like(coords[axis], edge)
                values = form.evaluate(np.float64(0.0), coords)
                if np.max(np.abs(values)) > 1e-8 * scale:
                    raise InputError("u0 does not vanish on the Dirichlet boundary")

    def initial_values(self) -> FloatArray:
        if isinstance(self.u0, ClosedForm):
            return self.u0.at_time(self.grid, 0.0)
        return np.asarray(self.u0, dtype=np.float64)

    def forcing_values(self, index: int) -> FloatArray:
        """f at the time level with the given index, shape (*nx, N)."""
        if self.forcing is None:
            return np.zeros(self.grid.shape[1:])
        if isinstance(self.forcing, Field):
            return self.forcing.values[index]
        return self.forcing.at_time(self.grid, index * self.grid.dt)

    def with_grid(self, grid: SpaceTimeGrid) -> "ProblemSpec":
        if isinstance(self.forcing, Field) or not isinstance(self.u0, ClosedForm):
            raise InputError("only closed-form scenarios can be moved to another grid")
        return replace(self, grid=grid)


@dataclass(frozen=True)
class NewtonStats:
    step: int
    iterations: int
    final_residual: float
    damped_steps: int = 0


@dataclass(frozen=True)
class Trajectory:
    field: Field
    newton_log: tuple[NewtonStats, ...] = ()

    @property
    def max_iterations(self) -> int:
        return max((s.iterations for s in self.newton_log), default=0)


@dataclass(frozen=True)
class ConvergenceStudy:
    spacings: tuple[float, ...]
    errors: tuple[float, ...]
    order: float


class Discretization:
    """Discrete gradient operators, element weights and lumped mass for a grid."""

    def __init__(self, grid: SpaceTimeGrid) -> None:
        self.grid = grid
        if grid.dim == 1:
            ops, weights = self._edges_1d(grid)
        else:
            ops, weights = self._triangles_2d(grid)
        self.ops: list[sparse.csr_matrix] = ops
        self.weights: FloatArray = weights
        self.mass: FloatArray = np.full(int(np.prod(grid.nx)), grid.space_weight)

    @staticmethod
    def _edges_1d(grid: SpaceTimeGrid) -> tuple[list[sparse.csr_matrix], FloatArray]:
        n, h = grid.nx[0], grid.dx[0]
        if grid.periodic:
            rows = np.repeat(np.arange(n), 2)
            cols = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1).ravel()
            data = np.tile([-1.0 / h, 1.0 / h], n)
            edges = n
        else:
            edges = n + 1
            e = np.arange(edges)
            right, left = e[e < n], e[e >= 1]
            rows = np.concatenate([right, left])
            cols = np.concatenate([right, left - 1])
            data = np.concatenate([np.full(right.size, 1.0 / h), np.full(left.size, -1.0 / h)])
        op = sparse.coo_matrix((data, (rows, cols)), shape=(edges, n)).tocsr()
        return [op], np.full(edges, h)

    @staticmethod
    def _triangles_2d(grid: SpaceTimeGrid) -> tuple[list[sparse.csr_matrix], FloatArray]:
        (nx, ny), (hx, hy) = grid.nx, grid.dx
        first = 0 if grid.periodic else -1
        I, J = np.meshgrid(np.arange(first, nx), np.arange(first, ny), indexing="ij")
        I, J = I.ravel(), J.ravel()
        squares = I.size

        def node(i: NDArray[np.int64], j: NDArray[np.int64]) -> NDArray[np.int64]:
            if grid.periodic:
                return (i % nx) * ny + (j % ny)
            inside = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
            return np.where(inside, i * ny + j, -1)

        lower = np.arange(squares)
        upper = lower + squares
        # (element, plus node, minus node, spacing) per axis
        stencils = [
            [
                (lower, node(I + 1, J), node(I, J), hx),
                (upper, node(I + 1, J + 1), node(I, J + 1), hx),
            ],
            [
                (lower, node(I, J + 1), node(I, J), hy),
                (upper, node(I + 1, J + 1), node(I + 1, J), hy),
            ],
        ]
        ops = []
        for axis_stencils in stencils:
            rows, cols, data = [], [], []
            for elem, plus, minus, h in axis_stencils:
                for nodes, sign in ((plus, 1.0), (minus, -1.0)):
                    keep = nodes >= 0
                    rows.append(elem[keep])
                    cols.append(nodes[keep])
                    data.append(np.full(int(keep.sum()), sign / h))
            op = sparse.coo_matrix(
                (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                shape=(2 * squares, nx * ny),
            ).tocsr()
            ops.append(op)
        return ops, np.full(2 * squares, 0.5 * hx * hy)

    @property
    def n_nodes(self) -> int:
        return int(self.mass.size)

    @property
    def n_elements(self) -> int:
        return int(self.weights.size)

    @cached_property
    def _block_ops(self) -> list[sparse.csr_matrix]:
        eye = sparse.identity(self.grid.components, format="csr")
        return [sparse.kron(op, eye, format="csr") for op in self.ops]

    def gradients(self, u: FloatArray) -> FloatArray:
        """D_e u for every element, shape (E, N, n)."""
        return np.stack([op @ u for op in self.ops], axis=-1)

    def energy(self, model: GrowthModel, u: FloatArray) -> float:
        dens = np.asarray(model.energy(self.gradients(u)))
        return float(pairwise_sum(self.weights * dens))

    def energy_gradient(self, model: GrowthModel, u: FloatArray) -> FloatArray:
        stress = model.stress(self.gradients(u))
        out = np.zeros_like(u)
        for i, op in enumerate(self.ops):
            out += op.T @ (self.weights[:, None] * stress[..., i])
        return out

    def hessian(self, model: GrowthModel, u: FloatArray, floor: float) -> sparse.csr_matrix:
        """sum_{i,k} G_i^T diag(w D_Q A) G_k on the (node, component) unknowns."""
        jac = model.stress_jacobian(self.gradients(u), floor)
        E, N = self.n_elements, self.grid.components
        base = (np.arange(E) * N)[:, None, None]
        rows = np.broadcast_to(base + np.arange(N)[None, :, None], (E, N, N)).ravel()
        cols = np.broadcast_to(base + np.arange(N)[None, None, :], (E, N, N)).ravel()
        size = self.n_nodes * N
        total = sparse.csr_matrix((size, size))
        blocks = self._block_ops
        for i, gi in enumerate(blocks):
            for k, gk in enumerate(blocks):
                data = (self.weights[:, None, None] * jac[:, :, i, :, k]).ravel()
                mid = sparse.coo_matrix((data, (rows, cols)), shape=(E * N, E * N)).tocsr()
                total = total + gi.T @ mid @ gk
        return total.tocsr()


def _flat(grid: SpaceTimeGrid, values: FloatArray) -> FloatArray:
    return np.asarray(values, dtype=np.float64).reshape(-1, grid.components)


def _newton(
    disc: Discretization,
    model: GrowthModel,
    u_prev: FloatArray,
    forcing: FloatArray,
    cfg: SolverConfig,
    step: int,
    time: float,
) -> tuple[FloatArray, NewtonStats]:
    dt = disc.grid.dt
    m = disc.mass[:, None]
    load = m * forcing

    def residual(u: FloatArray) -> FloatArray:
        return m * (u - u_prev) / dt + disc.energy_gradient(model, u) - load

    def functional(u: FloatArray) -> float:
        d = u - u_prev
        return (
            pairwise_sum(m * d * d) / (2.0 * dt)
            + disc.energy(model, u)
            - pairwise_sum(load * u)
        )

    scale = (
        float(np.linalg.norm(m * u_prev / dt))
        + float(np.linalg.norm(load))
        + float(np.linalg.norm(disc.energy_gradient(model, u_prev)))
    )
    target = cfg.newton_tol * max(scale, _TINY)
    mass_op = sparse.diags(np.repeat(disc.mass, disc.grid.components) / dt)

    u = u_prev.copy()
    r = residual(u)
    res = float(np.linalg.norm(r))
    damped = 0
    for it in range(cfg.newton_max_iter + 1):
        if res <= target:
            return u, NewtonStats(step, it, res / max(scale, _TINY), damped)
        if it == cfg.newton_max_iter:
            break
        jac = (mass_op + disc.hessian(model, u, cfg.jacobian_regularization)).tocsc()
        direction = np.asarray(spsolve(jac, -r.ravel())).reshape(u.shape)
        if not np.all(np.isfinite(direction)):
            raise NewtonConvergenceError(
                "Newton direction is not finite", res, it, u, step, time
            )
        base = None
        slope = float(np.sum(r * direction))
        alpha = 1.0
        for _ in range(cfg.line_search_max):
            trial = u + alpha * direction
            r_trial = residual(trial)
            res_trial = float(np.linalg.norm(r_trial))
            if res_trial < res:
                break
            base = functional(u) if base is None else base
            if functional(trial) <= base + _ARMIJO * alpha * slope:
                break
            alpha *= cfg.damping
        else:
            logger.warning(
                "step %d: line search exhausted at alpha=%.3g (residual %.3e)",
                step,
                alpha,
                res,
            )
        if alpha < 1.0:
            damped += 1
        u, r, res = trial, r_trial, res_trial
        logger.debug("step %d newton %d: residual %.3e alpha %.3g", step, it + 1, res, alpha)
    raise NewtonConvergenceError(
        f"Newton did not converge in {cfg.newton_max_iter} iterations",
        residual=res / max(scale, _TINY),
        iterations=cfg.newton_max_iter,
        iterate=u,
        step=step,
        time=time,
    )


def step_implicit(
    u_prev: FloatArray,
    spec: ProblemSpec,
    cfg: SolverConfig,
    t: float,
    disc: Discretization | None = None,
) -> FloatArray:
    """One backward Euler step from time ``t``; f is taken at t + dt.

    Args:
        u_prev: Nodal values at ``t``, shape (*nx, N).
        spec: Problem whose model and forcing define the step.
        cfg: Newton settings.
        t: Time of ``u_prev``; must sit on the grid.
        disc: Prebuilt discretization to reuse across steps.

    Returns:
        Nodal values at t + dt with the same shape as ``u_prev``.

    Raises:
        InputError: ``u_prev`` has the wrong shape or is not finite.
        SolverError: Newton did not converge.
    """
    grid = spec.grid
    prev = np.asarray(u_prev, dtype=np.float64)
    if prev.shape != grid.shape[1:] or not np.all(np.isfinite(prev)):
        raise InputError("u_prev must be a finite array of shape (*nx, N)")
    disc = disc or Discretization(grid)
    index = round((t + grid.dt) / grid.dt)
    forcing = _flat(grid, spec.forcing_values(index))
    u, _ = _newton(disc, spec.model, _flat(grid, prev), forcing, cfg, index, t + grid.dt)
    return u.reshape(prev.shape)


def solve(spec: ProblemSpec, cfg: SolverConfig) -> Trajectory:
    """March ``nt`` implicit steps from u0 and keep every time level.

    Args:
        spec: Grid, model, initial data and forcing.
        cfg: Newton settings.

    Returns:
        The full field of shape (nt + 1, *nx, N) with one Newton record per step.

    Raises:
        SolverError: Newton failed or a time level stopped being finite. The
            error carries the step index and time.
    """
    grid = spec.grid
    disc = Discretization(grid)
    values = np.empty(grid.shape)
    values[0] = spec.initial_values()
    u = _flat(grid, values[0])
    log: list[NewtonStats] = []
    for k in range(1, grid.nt + 1):
        forcing = _flat(grid, spec.forcing_values(k))
        if not np.all(np.isfinite(forcing)):
            raise SolverError("forcing is not finite", step=k, time=k * grid.dt)
        u, st = _newton(disc, spec.model, u, forcing, cfg, k, k * grid.dt)
        if not np.all(np.isfinite(u)):
            raise SolverError("solution is not finite", step=k, time=k * grid.dt)
        values[k] = u.reshape(grid.shape[1:])
        log.append(st)
    logger.debug(
        "%s: %d steps, at most %d Newton iterations",
        spec.label or spec.model.label,
        grid.nt,
        max((s.iterations for s in log), default=0),
    )
    return Trajectory(Field(grid, values), tuple(log))


def discrete_energy(model: GrowthModel, values: FloatArray, grid: SpaceTimeGrid) -> float:
    """E_h(u) = sum_e w_e F(D_e u) for one time level of shape (*nx, N)."""
    return Discretization(grid).energy(model, _flat(grid, values))


def divergence(model: GrowthModel, values: FloatArray, grid: SpaceTimeGrid) -> FloatArray:
    """div_h A(D_h u) = -(1/m) sum_i G_i^T (w A_i), shape (*nx, N)."""
    disc = Discretization(grid)
    grad = disc.energy_gradient(model, _flat(grid, values))
    return (-grad / disc.mass[:, None]).reshape(np.shape(values))


def l2_error(trajectory: Field, exact: ClosedForm) -> float:
    """Space-time L^2 distance to a closed-form solution."""
    reference = exact.sample(trajectory.grid)
    if reference.values.shape != trajectory.values.shape:
        raise InputError("trajectory must cover the whole grid")
    return norms(trajectory.replace(trajectory.values - reference.values), "L2")


def observed_order(errors: Sequence[float], spacings: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(spacing)."""
    e = np.asarray(errors, dtype=np.float64)
    h = np.asarray(spacings, dtype=np.float64)
    if e.size < 2 or e.size != h.size:
        raise InputError("need at least two (spacing, error) pairs")
    if np.any(e <= 0.0) or np.any(h <= 0.0):
        raise InputError("errors and spacings must be positive")
    if e.size == 2:
        return float(math.log(e[1] / e[0]) / math.log(h[1] / h[0]))
    return float(stats.linregress(np.log(h), np.log(e)).slope)


def convergence_study(
    spec: ProblemSpec,
    cfg: SolverConfig,
    levels: int = 2,
    space: int = 2,
    time: int = 4,
) -> ConvergenceStudy:
    """Solve on successively refined grids and fit the spatial order of the L^2 error.

    Args:
        spec: Problem with an exact solution; u0 must be closed form.
        cfg: Newton settings.
        levels: Number of grids, at least two.
        space: Spatial refinement factor per level.
        time: Step refinement factor per level. The default 4 with ``space=2``
            keeps the first order time error below the second order space error.

    Returns:
        Spacings, errors and the fitted order.
    """
    if spec.exact is None:
        raise InputError("a convergence study needs an exact solution")
    if levels < 2:
        raise InputError("a convergence study needs at least two levels")
    spacings, errors = [], []
    grid = spec.grid
    for level in range(levels):
        if level:
            grid = grid.refined(space, time)
        current = spec.with_grid(grid)
        traj = solve(current, cfg)
        err = l2_error(traj.field, spec.exact)
        logger.debug("level %d: dx=%.4g dt=%.4g error=%.4e", level, grid.dx[0], grid.dt, err)
        spacings.append(grid.dx[0])
        errors.append(err)
    if min(errors) == 0.0:
        raise SolverError("exact reproduction: the error vanished on some level")
    return ConvergenceStudy(tuple(spacings), tuple(errors), observed_order(errors, spacings))
