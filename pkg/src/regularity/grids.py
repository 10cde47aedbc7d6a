"""Structured space-time grids, sampled fields and difference quotients.

A :class:`Field` stores ``values[t, x_1, ..., x_n, c]`` on a :class:`SpaceTimeGrid`.
Quotient operators only shift by whole grid steps, so every discrete identity here is
exact up to rounding. All reductions go through :func:`pairwise_sum`.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, ClassVar, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

from .errors import InputError, RangeError

__all__ = [
    "SpaceTimeGrid",
    "TimeSeriesGrid",
    "Field",
    "QuotientSpec",
    "pairwise_sum",
    "trim",
    "delta",
    "dq",
    "averaged_delta",
    "backward_forward",
    "queer_decomposition_residual",
    "summation_by_parts_residual",
    "cancellation_residual",
    "basic2_check",
    "norms",
    "space_norms",
    "time_derivative",
    "central_gradient",
    "as_time_series",
]

FloatArray = NDArray[np.float64]
Boundary = Literal["periodic", "dirichlet"]
Direction = Literal["time", "space", "queer", "diagonal"]
NormKind = Literal["L2", "Lq", "orlicz_modular", "sup_time_of_space_L2"]

_STEP_RTOL = 1e-9


def pairwise_sum(values: ArrayLike, axis: int | None = None) -> Any:
    """Sum with a fixed power-of-two reduction tree.

    The tree only depends on the length of the reduced axis, so the result is
    bit-identical however the caller chunks or parallelizes the work around it.
    """
    a = np.asarray(values, dtype=np.float64)
    if axis is None:
        a = a.ravel()
        axis = 0
    a = np.moveaxis(a, axis, 0)
    if a.shape[0] == 0:
        out = np.zeros(a.shape[1:])
        return float(out) if out.ndim == 0 else out
    size = 1 << (a.shape[0] - 1).bit_length()
    buf = np.zeros((size, *a.shape[1:]))
    buf[: a.shape[0]] = a
    while buf.shape[0] > 1:
        buf = buf[0::2] + buf[1::2]
    out = buf[0]
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform grid on [0, T] x box.

    Periodic axes hold nodes ``j dx`` (j < nx, box length nx dx); Dirichlet axes hold
    the interior nodes ``(j + 1) dx`` of a box of length (nx + 1) dx whose boundary
    values are zero.
    """

    nx: tuple[int, ...]
    dx: tuple[float, ...]
    nt: int
    dt: float
    boundary: Boundary = "periodic"
    components: int = 1

    min_nodes: ClassVar[int] = 4
    min_steps: ClassVar[int] = 4

    def __post_init__(self) -> None:
        if len(self.nx) not in (1, 2) or len(self.dx) != len(self.nx):
            raise InputError("grids have one or two space axes with matching spacings")
        if any(int(n) < self.min_nodes for n in self.nx):
            raise InputError(f"every space axis needs at least {self.min_nodes} nodes")
        if self.nt < self.min_steps:
            raise InputError(f"grids need at least {self.min_steps} time steps")
        if self.components < 1:
            raise InputError("component count must be positive")
        if not all(math.isfinite(h) and h > 0.0 for h in (*self.dx, self.dt)):
            raise InputError("grid spacings must be positive and finite")
        if self.boundary not in ("periodic", "dirichlet"):
            raise InputError(f"unknown boundary {self.boundary!r}")

    @classmethod
    def uniform(
        cls,
        nx: int | tuple[int, ...],
        length: float,
        nt: int,
        t_final: float,
        boundary: Boundary = "periodic",
        components: int = 1,
    ) -> "SpaceTimeGrid":
        """Grid with ``nx`` nodes per axis on the box [0, length]^n.

        Args:
            nx: Node count, one per axis or a single int for 1D.
            length: Side of the box.
            nt: Number of time steps.
            t_final: Horizon T; dt = T / nt.
            boundary: ``periodic`` stores n cells per axis; ``dirichlet`` stores
                the n interior nodes of n + 1 cells.
            components: Number of solution components N.
        """
        counts = (nx,) if isinstance(nx, int) else tuple(nx)
        cells = [n if boundary == "periodic" else n + 1 for n in counts]
        return cls(
            nx=counts,
            dx=tuple(length / c for c in cells),
            nt=nt,
            dt=t_final / nt,
            boundary=boundary,
            components=components,
        )

    @property
    def dim(self) -> int:
        return len(self.nx)

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    @property
    def t_final(self) -> float:
        return self.nt * self.dt

    @property
    def lengths(self) -> tuple[float, ...]:
        extra = 0 if self.periodic else 1
        return tuple((n + extra) * h for n, h in zip(self.nx, self.dx))

    @property
    def times(self) -> FloatArray:
        return self.dt * np.arange(self.nt + 1)

    @property
    def space_weight(self) -> float:
        return float(np.prod(self.dx))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nt + 1, *self.nx, self.components)

    def coords(self, axis: int, offset: int = 0, count: int | None = None) -> FloatArray:
        count = self.nx[axis] - offset if count is None else count
        first = offset if self.periodic else offset + 1
        return self.dx[axis] * (first + np.arange(count))

    def mesh(self) -> tuple[FloatArray, ...]:
        return tuple(np.meshgrid(*(self.coords(i) for i in range(self.dim)), indexing="ij"))

    def refined(self, space: int = 2, time: int = 1) -> "SpaceTimeGrid":
        """Same box and horizon with ``space`` times finer cells and ``time`` times more steps."""
        extra = 0 if self.periodic else 1
        nx = tuple((n + extra) * space - extra for n in self.nx)
        return replace(
            self,
            nx=nx,
            dx=tuple(h / space for h in self.dx),
            nt=self.nt * time,
            dt=self.dt / time,
        )


@dataclass(frozen=True)
class TimeSeriesGrid(SpaceTimeGrid):
    """One node of unit measure; carries a bare time series through the field operators."""

    min_nodes: ClassVar[int] = 1
    min_steps: ClassVar[int] = 1

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.nx != (1,):
            raise InputError("time series grids have a single node")


@dataclass(frozen=True, eq=False)
class Field:
    """Samples ``values[t, x..., c]`` on (a window of) ``grid``.

    ``t0`` is the time of the first row and ``offset`` the grid index of the first
    node along each space axis; derived fields may cover a sub-window of the grid.
    """

    grid: SpaceTimeGrid
    values: FloatArray
    t0: float = 0.0
    offset: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != self.grid.dim + 2:
            raise InputError(
                f"field values need {self.grid.dim + 2} axes, got shape {values.shape}"
            )
        if not self.offset:
            object.__setattr__(self, "offset", (0,) * self.grid.dim)
        for n, o, extent in zip(self.grid.nx, self.offset, values.shape[1:-1]):
            if o < 0 or o + extent > n:
                raise InputError("field window exceeds the grid")
        if not np.all(np.isfinite(values)):
            raise InputError("field has non-finite entries")

    @property
    def n_times(self) -> int:
        return int(self.values.shape[0])

    @property
    def components(self) -> int:
        return int(self.values.shape[-1])

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return tuple(int(s) for s in self.values.shape[1:-1])

    @property
    def times(self) -> FloatArray:
        return self.t0 + self.grid.dt * np.arange(self.n_times)

    @property
    def t_end(self) -> float:
        return self.t0 + self.grid.dt * (self.n_times - 1)

    def coords(self, axis: int) -> FloatArray:
        return self.grid.coords(axis, self.offset[axis], self.spatial_shape[axis])

    def replace(
        self,
        values: ArrayLike,
        t0: float | None = None,
        offset: tuple[int, ...] | None = None,
    ) -> "Field":
        return Field(
            self.grid,
            np.asarray(values, dtype=np.float64),
            self.t0 if t0 is None else t0,
            self.offset if offset is None else offset,
        )

    def matrices(self) -> FloatArray:
        """Gradient fields as (..., N, n) matrices (components ordered c * n + i)."""
        n = self.grid.dim
        if self.components % n:
            raise InputError("component count is not a multiple of the space dimension")
        return self.values.reshape(*self.values.shape[:-1], self.components // n, n)

    @classmethod
    def zeros(cls, grid: SpaceTimeGrid) -> "Field":
        return cls(grid, np.zeros(grid.shape))


@dataclass(frozen=True)
class QuotientSpec:
    """Direction, step ``h`` (a whole multiple of the grid step) and trim margin."""

    direction: Direction
    h: float
    axis: int = 0
    trim: float = 0.0

    def __post_init__(self) -> None:
        if self.direction not in ("time", "space", "queer", "diagonal"):
            raise InputError(f"unknown direction {self.direction!r}")
        if not (math.isfinite(self.h) and self.h > 0.0):
            raise InputError("h must be positive")
        if not self.trim >= 0.0:
            raise InputError("trim margin must be >= 0")


def _steps(h: float, step: float) -> int:
    k = round(h / step)
    if k < 1 or abs(k * step - h) > _STEP_RTOL * max(h, step):
        raise InputError(f"h={h!r} is not a whole multiple of the grid step {step!r}")
    return int(k)


def _axis(grid: SpaceTimeGrid, axis: int) -> int:
    if not 0 <= axis < grid.dim:
        raise InputError(f"space axis {axis} out of range for a {grid.dim}-d grid")
    return axis + 1


def _window(values: FloatArray, ax: int, start: int, stop: int) -> FloatArray:
    idx: list[slice] = [slice(None)] * values.ndim
    idx[ax] = slice(start, stop)
    return values[tuple(idx)]


def _ahead(values: FloatArray, ax: int, k: int, periodic: bool) -> tuple[FloatArray, FloatArray]:
    """(g(. + k), g(.)) along ``ax``; wraps when periodic, shrinks otherwise."""
    if periodic:
        return np.roll(values, -k, axis=ax), values
    extent = values.shape[ax]
    if k >= extent:
        raise RangeError(f"shift of {k} steps exceeds the axis extent {extent}")
    return _window(values, ax, k, extent), _window(values, ax, 0, extent - k)


def trim(field: Field, a: float) -> Field:
    """Restrict to the interior time window [t0 + a, t_end - a]."""
    if a == 0.0:
        return field
    if a < 0.0:
        raise InputError("trim margin must be >= 0")
    dt = field.grid.dt
    k = math.ceil(a / dt - _STEP_RTOL)
    stop = field.n_times - k
    if stop - k < 1:
        raise RangeError(f"trim margin {a} leaves an empty time window")
    return field.replace(field.values[k:stop], t0=field.t0 + k * dt)


def delta(field: Field, spec: QuotientSpec) -> Field:
    """Delta^h g in the requested direction on the trimmed field.

    ``queer`` is g(t+h, x+h e_i) - g(t, x+h e_i); ``diagonal`` is
    g(t+h, x+h e_i) - g(t, x).
    """
    g = trim(field, spec.trim)
    grid = g.grid
    if spec.direction == "time":
        ahead, here = _ahead(g.values, 0, _steps(spec.h, grid.dt), False)
        return g.replace(ahead - here)
    ax = _axis(grid, spec.axis)
    kx = _steps(spec.h, grid.dx[spec.axis])
    shifted, here = _ahead(g.values, ax, kx, grid.periodic)
    if spec.direction == "space":
        return g.replace(shifted - here)
    kt = _steps(spec.h, grid.dt)
    if kt >= g.n_times:
        raise RangeError(f"time shift of {kt} steps exceeds the window")
    if spec.direction == "queer":
        return g.replace(shifted[kt:] - shifted[:-kt])
    return g.replace(shifted[kt:] - here[:-kt])


def dq(field: Field, spec: QuotientSpec) -> Field:
    d = delta(field, spec)
    return d.replace(d.values / spec.h)


def _unit_step(grid: SpaceTimeGrid, spec: QuotientSpec) -> float:
    if spec.direction == "time":
        return grid.dt
    if spec.direction == "space":
        return grid.dx[spec.axis]
    raise InputError("averaged quotients are defined for time and space directions")


def averaged_delta(field: Field, spec: QuotientSpec) -> Field:
    """Mean over s = 1..h/step of Delta^{s step} g, on the common support."""
    step = _unit_step(field.grid, spec)
    k = _steps(spec.h, step)
    parts = [delta(field, replace(spec, h=s * step)) for s in range(1, k + 1)]
    common = parts[-1].values.shape
    acc = np.zeros(common)
    for part in parts:
        acc += part.values[tuple(slice(0, n) for n in common)]
    return parts[-1].replace(acc / k)


def backward_forward(field: Field, spec: QuotientSpec, averaged: bool = False) -> Field:
    """Delta^{-h} Delta^h g = 2 g(t) - g(t+h) - g(t-h), optionally averaged over s <= h."""
    g = trim(field, spec.trim)
    grid = g.grid
    step = _unit_step(grid, spec)
    k = _steps(spec.h, step)
    shifts = range(1, k + 1) if averaged else (k,)
    if spec.direction == "time":
        ax, periodic = 0, False
    else:
        ax, periodic = _axis(grid, spec.axis), grid.periodic
    v = g.values
    if periodic:
        acc = np.zeros_like(v)
        for s in shifts:
            acc += 2.0 * v - np.roll(v, -s, axis=ax) - np.roll(v, s, axis=ax)
        return g.replace(acc / len(shifts))
    extent = v.shape[ax]
    if extent - 2 * k < 1:
        raise RangeError(f"2h exceeds the extent of axis {ax}")
    centre = _window(v, ax, k, extent - k)
    acc = np.zeros_like(centre)
    for s in shifts:
        acc += (
            2.0 * centre
            - _window(v, ax, k + s, extent - k + s)
            - _window(v, ax, k - s, extent - k - s)
        )
    if ax == 0:
        return g.replace(acc / len(shifts), t0=g.t0 + k * grid.dt)
    offset = list(g.offset)
    offset[ax - 1] += k
    return g.replace(acc / len(shifts), offset=tuple(offset))


def queer_decomposition_residual(field: Field, axis: int, h: float) -> tuple[float, bool]:
    """Check Delta_x g = diagonal(g) - Delta_t g(., x + h e_i) and the triangle bound.

    Returns the max abs residual of the identity and whether
    |Delta_x g| <= |diagonal| + |Delta_t g(., x + h e_i)| held at every point.
    """
    grid = field.grid
    ax = _axis(grid, axis)
    kt = _steps(h, grid.dt)
    kx = _steps(h, grid.dx[axis])
    v = field.values
    if kt >= field.n_times:
        raise RangeError("time shift exceeds the window")
    shifted, here = _ahead(v, ax, kx, grid.periodic)
    space = (shifted - here)[:-kt]
    diagonal = shifted[kt:] - here[:-kt]
    time_shifted = shifted[kt:] - shifted[:-kt]
    residual = float(np.max(np.abs(space - (diagonal - time_shifted)), initial=0.0))
    def norm(x: FloatArray) -> FloatArray:
        return np.sqrt(np.sum(x * x, axis=-1))

    slack = 1e-12 * (1.0 + np.max(np.abs(v), initial=0.0))
    bound = bool(np.all(norm(space) <= norm(diagonal) + norm(time_shifted) + slack))
    return residual, bound


def _match(f: Field, g: Field) -> None:
    if f.values.shape != g.values.shape or f.grid != g.grid:
        raise InputError("fields live on different grids or windows")


def summation_by_parts_residual(f: Field, g: Field, spec: QuotientSpec) -> float:
    """|LHS - RHS| of sum Delta^h f . g = sum f . Delta^{-h} g + boundary windows.

    On a non-periodic axis the sum runs over [k, len - k) with the two boundary
    windows of width k; periodic axes have no boundary terms.
    """
    _match(f, g)
    a, b = trim(f, spec.trim), trim(g, spec.trim)
    grid = a.grid
    step = _unit_step(grid, spec)
    k = _steps(spec.h, step)
    weight = grid.dt * grid.space_weight
    if spec.direction == "time":
        ax, periodic = 0, False
    else:
        ax, periodic = _axis(grid, spec.axis), grid.periodic
    fv, gv = a.values, b.values
    if periodic:
        lhs = pairwise_sum((np.roll(fv, -k, axis=ax) - fv) * gv)
        rhs = pairwise_sum(fv * (np.roll(gv, k, axis=ax) - gv))
        return abs(lhs - rhs) * weight
    n = fv.shape[ax]
    lo, hi = k, n - k
    if hi <= lo:
        raise RangeError("axis too short for the summation window")

    def w(x: FloatArray, start: int, stop: int) -> FloatArray:
        return _window(x, ax, start, stop)

    lhs = pairwise_sum((w(fv, lo + k, hi + k) - w(fv, lo, hi)) * w(gv, lo, hi))
    rhs = (
        pairwise_sum(w(fv, lo, hi) * (w(gv, lo - k, hi - k) - w(gv, lo, hi)))
        + pairwise_sum(w(fv, hi, hi + k) * w(gv, hi - k, hi))
        - pairwise_sum(w(fv, lo, lo + k) * w(gv, lo - k, lo))
    )
    return abs(lhs - rhs) * weight


def _index(t: float, dt: float, name: str) -> int:
    j = round(t / dt)
    if abs(j * dt - t) > _STEP_RTOL * max(abs(t), dt):
        raise InputError(f"{name}={t!r} is not on the time grid")
    return int(j)


def cancellation_residual(
    f: ArrayLike, a: float, b: float, h: float, dt: float = 1.0
) -> float:
    """sum_{[a,b]} (f(t+h) - f(t-h)) against sum_{(b-h,b+h]} f - sum_{[a-h,a+h)} f."""
    series = np.asarray(f, dtype=np.float64)
    ia, ib, k = _index(a, dt, "a"), _index(b, dt, "b"), _steps(h, dt)
    if ia - k < 0 or ib + k > series.shape[0] - 1 or ib < ia:
        raise RangeError("[a - h, b + h] must lie inside the series")
    lhs = pairwise_sum(series[ia + k : ib + k + 1] - series[ia - k : ib - k + 1], axis=0)
    rhs = pairwise_sum(series[ib - k + 1 : ib + k + 1], axis=0) - pairwise_sum(
        series[ia - k : ia + k], axis=0
    )
    return float(np.max(np.abs(np.asarray(lhs - rhs)), initial=0.0)) * dt


def basic2_check(
    g: ArrayLike,
    a: float,
    b: float,
    s: float,
    dt: float = 1.0,
    derivative: Callable[[float], ArrayLike] | None = None,
    t0: float = 0.0,
) -> tuple[float, float]:
    """Both sides of sum_{[a,b)} |D^s g| <= int_a^{b+s} |g'|.

    Without ``derivative`` the right side uses forward differences of the samples,
    which makes the bound an exact triangle inequality. With it, the right side is
    integrated by adaptive quadrature.
    """
    series = np.asarray(g, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    ia, ib = _index(a - t0, dt, "a"), _index(b - t0, dt, "b")
    ks = _steps(s, dt)
    if ia < 0 or ib <= ia or ib + ks - 1 > series.shape[0] - 1:
        raise RangeError("[a, b + s] must lie inside the series")
    ahead = series[ia + ks : ib + ks] - series[ia:ib]
    lhs = pairwise_sum(np.linalg.norm(ahead, axis=-1) / (ks * dt)) * dt
    if derivative is None:
        unit = series[ia + 1 : ib + ks] - series[ia : ib + ks - 1]
        rhs = pairwise_sum(np.linalg.norm(unit, axis=-1))
        return float(lhs), float(rhs)
    start = t0 + ia * dt
    stop = t0 + (ib - 1 + ks) * dt
    rhs, _ = integrate.quad(
        lambda t: float(np.linalg.norm(np.atleast_1d(derivative(t)))),
        start,
        stop,
        limit=500,
    )
    return float(lhs), float(rhs)


def _time_weights(n: int, dt: float) -> FloatArray:
    """Node-centred cells: full dt inside, half cells at the two window ends."""
    w = np.full(n, dt)
    if n > 1:
        w[0] = w[-1] = 0.5 * dt
    return w


def _pointwise(field: Field) -> FloatArray:
    return np.sqrt(np.sum(field.values * field.values, axis=-1))


def space_norms(field: Field, q: float = 2.0) -> FloatArray:
    """||g(t)||_{L^q(box)} for every stored time."""
    if q < 1.0:
        raise InputError("q must be >= 1")
    mag = _pointwise(field).reshape(field.n_times, -1)
    w = field.grid.space_weight
    return np.array(
        [(pairwise_sum(np.power(row, q)) * w) ** (1.0 / q) for row in mag]
    )


def norms(
    field: Field,
    kind: NormKind = "L2",
    q: float = 2.0,
    phi: Any = None,
) -> float:
    """Space-time norm or modular on node-centred cells.

    Args:
        field: Values on the grid; times are weighted by the trapezoid rule.
        kind: Which norm or modular to evaluate.
        q: Exponent for the L^q kinds.
        phi: Anything with a vectorized ``value``; required for ``orlicz_modular``.

    Returns:
        The norm, or the modular for ``orlicz_modular``.
    """
    if kind == "sup_time_of_space_L2":
        return float(np.max(space_norms(field, 2.0), initial=0.0))
    mag = _pointwise(field)
    tw = _time_weights(field.n_times, field.grid.dt).reshape(-1, *([1] * (mag.ndim - 1)))
    w = tw * field.grid.space_weight
    if kind == "L2":
        return math.sqrt(pairwise_sum(w * mag * mag))
    if kind == "Lq":
        if q < 1.0:
            raise InputError("q must be >= 1")
        return float(pairwise_sum(w * np.power(mag, q)) ** (1.0 / q))
    if kind == "orlicz_modular":
        if phi is None:
            raise InputError("orlicz_modular needs an Orlicz function")
        return float(pairwise_sum(w * np.asarray(phi.value(mag))))
    raise InputError(f"unknown norm kind {kind!r}")


def time_derivative(field: Field) -> Field:
    """Central differences in time on rows 1..L-2."""
    if field.n_times < 3:
        raise RangeError("central time differences need at least three rows")
    v = field.values
    return field.replace((v[2:] - v[:-2]) / (2.0 * field.grid.dt), t0=field.t0 + field.grid.dt)


def central_gradient(field: Field, zero_boundary: bool = True) -> Field:
    """Central differences in space; components ordered c * n + i.

    Args:
        field: Samples on the full spatial grid.
        zero_boundary: On Dirichlet axes, use the zero boundary value as the outside
            neighbour. Quantities that do not vanish on the boundary, such as
            V(Du) or the forcing, pass False and get second order one-sided
            differences there.

    Returns:
        A field with ``components * dim`` components.
    """
    grid = field.grid
    v = field.values
    parts = []
    for i in range(grid.dim):
        ax = i + 1
        if grid.periodic:
            d = (np.roll(v, -1, axis=ax) - np.roll(v, 1, axis=ax)) / (2.0 * grid.dx[i])
        elif zero_boundary:
            pad = [(0, 0)] * v.ndim
            pad[ax] = (1, 1)
            padded = np.pad(v, pad)
            d = _window(padded, ax, 2, v.shape[ax] + 2) - _window(padded, ax, 0, v.shape[ax])
            d = d / (2.0 * grid.dx[i])
        else:
            d = np.gradient(v, grid.dx[i], axis=ax, edge_order=2)
        parts.append(d)
    grad = np.stack(parts, axis=-1)
    return field.replace(grad.reshape(*v.shape[:-1], -1))


def as_time_series(values: ArrayLike, dt: float = 1.0, t0: float = 0.0) -> Field:
    """Embed a series of shape (L,) or (L, N) into a one-node, unit-measure grid."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2 or v.shape[0] < 2:
        raise InputError("time series need shape (L,) or (L, N) with L >= 2")
    grid = TimeSeriesGrid(
        nx=(1,), dx=(1.0,), nt=v.shape[0] - 1, dt=dt, components=v.shape[1]
    )
    return Field(grid, v[:, None, :], t0=t0)
