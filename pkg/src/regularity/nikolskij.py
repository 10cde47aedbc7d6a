"""Fractional smoothness measurements on sampled fields.

Quotient-norm curves ``h -> ||Delta^h g||_q`` are taken over a geometric ladder
h_k = 2^k step, the exponent is the least-squares slope in log-log coordinates and the
Nikolskij seminorm is the max over the ladder of ||Delta^h g||_q / h^alpha.
"""

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .errors import InputError, RangeError
from .grids import Field, QuotientSpec, delta, norms, time_derivative, trim
from .solver import ProblemSpec

__all__ = [
    "QuotientCurve",
    "RegularityReport",
    "DieningReport",
    "Prediction",
    "EmbeddingRow",
    "RegularityConfig",
    "RegularityExperiment",
    "geometric_ladder",
    "quotient_norm_curve",
    "estimate_exponent",
    "nikolskij_seminorm",
    "averaged_characterization_check",
    "predict_beta",
    "sobolev_embedding_exponent",
    "embedding_table",
    "ut_regularity_experiment",
]

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
Setting = Literal["time", "space_whole", "space_refined_case_a", "space_refined_case_b"]
Verdict = Literal["pass", "fail", "saturated", "n/a"]

DISPLAYED_FACTOR = 3.0


@dataclass(frozen=True)
class QuotientCurve:
    direction: str
    q: float
    trim: float
    steps: FloatArray
    norms: FloatArray
    axis: int = 0

    def __post_init__(self) -> None:
        if self.steps.size and np.any(np.diff(self.steps) <= 0.0):
            raise InputError("ladder steps must be strictly increasing")

    @property
    def label(self) -> str:
        if self.direction == "time":
            return "time"
        return f"{self.direction}_x{self.axis + 1}"


@dataclass(frozen=True)
class RegularityReport:
    direction: str
    q: float
    alpha_hat: float
    intercept: float
    r2: float
    h_min: float
    h_max: float
    seminorm: float
    saturated: bool
    predicted: float | None = None
    refined_prediction: float | None = None
    slack: float = 0.05

    @property
    def margin(self) -> float | None:
        if self.predicted is None:
            return None
        return self.alpha_hat - self.predicted

    @property
    def verdict(self) -> Verdict:
        if self.saturated:
            return "saturated"
        if self.predicted is None:
            return "n/a"
        return "pass" if self.alpha_hat >= self.predicted - self.slack else "fail"


@dataclass(frozen=True)
class DieningReport:
    k_avg: float
    k_plain: float
    alpha: float
    H: float
    slack: float = 0.05

    @property
    def factor(self) -> float:
        if self.k_avg == 0.0:
            return 0.0 if self.k_plain == 0.0 else math.inf
        return self.k_plain / self.k_avg

    @property
    def proven_factor(self) -> float:
        """Factor delivered by the averaging argument itself, 1 + 2^{1 + alpha}."""
        return 1.0 + 2.0 ** (1.0 + self.alpha)

    @property
    def passed(self) -> bool:
        return self.k_plain <= DISPLAYED_FACTOR * self.k_avg * (1.0 + self.slack)


@dataclass(frozen=True)
class Prediction:
    beta: float | None
    applies: bool
    setting: str
    reason: str = ""


@dataclass(frozen=True)
class EmbeddingRow:
    label: str
    n: int
    alpha: float
    q: float
    exponent: float


@dataclass(frozen=True)
class RegularityConfig:
    trim: float | None = None
    q: float = 2.0
    rungs: int = 6
    fit_min: int = 1
    fit_max: int | None = None
    slack: float = 0.05
    saturation: float = 0.95
    diening_H: float | None = None
    diening_slack: float = 0.05

    def __post_init__(self) -> None:
        if self.q < 1.0:
            raise InputError("q must be >= 1")
        if self.rungs < 4:
            raise InputError("a ladder needs at least four rungs")
        if self.fit_min < 0 or (self.fit_max is not None and self.fit_max < self.fit_min):
            raise InputError("fit window must satisfy 0 <= fit_min <= fit_max")


@dataclass(frozen=True)
class RegularityExperiment:
    reports: tuple[RegularityReport, ...]
    curves: tuple[QuotientCurve, ...]
    diening: DieningReport | None = None
    notes: tuple[str, ...] = field(default=())

    @property
    def passed(self) -> bool:
        ok = all(r.verdict != "fail" for r in self.reports)
        return ok and (self.diening is None or self.diening.passed)


def geometric_ladder(step: float, rungs: int) -> FloatArray:
    return step * 2.0 ** np.arange(rungs)


def quotient_norm_curve(
    g: Field,
    direction: str,
    q: float,
    ladder: Sequence[float],
    trim_margin: float = 0.0,
    axis: int = 0,
) -> QuotientCurve:
    """||Delta^h g||_{L^q} on the trimmed window for every h of the ladder.

    Args:
        g: Field to difference.
        direction: ``time``, ``space``, ``queer`` or ``diagonal``.
        q: Integrability exponent, at least 1.
        ladder: Steps h, each a whole multiple of the grid step along ``direction``.
        trim_margin: Time margin removed at both ends before differencing.
        axis: Space axis for the space-like directions.

    Returns:
        The curve, one norm per step.
    """
    if q < 1.0:
        raise InputError("q must be >= 1")
    steps = np.asarray(ladder, dtype=np.float64)
    values = []
    for h in steps:
        spec = QuotientSpec(direction, float(h), axis, trim_margin)  # type: ignore[arg-type]
        values.append(norms(delta(g, spec), "Lq", q=q))
    return QuotientCurve(direction, q, trim_margin, steps, np.asarray(values), axis)


def nikolskij_seminorm(curve: QuotientCurve, alpha: float) -> float:
    """max_k ||Delta^{h_k} g||_q / h_k^alpha over the ladder."""
    if curve.steps.size == 0:
        return 0.0
    return float(np.max(curve.norms / curve.steps**alpha))


def estimate_exponent(
    curve: QuotientCurve,
    window: tuple[float, float] | None = None,
    saturation: float = 0.95,
    slack: float = 0.05,
) -> RegularityReport:
    """Log-log slope of the curve inside ``window`` (inclusive, default the whole ladder).

    A zero norm inside the window, or a slope at or above ``saturation``, is reported as
    saturated: the data are at least Lipschitz along this direction.

    Args:
        curve: Output of ``quotient_norm_curve``.
        window: Inclusive range of steps to fit.
        saturation: Slope at which the report is marked saturated.
        slack: Tolerance used later when comparing against a prediction.

    Returns:
        The fitted exponent with its R^2 and Nikolskij seminorm.

    Raises:
        InputError: Fewer than four ladder points fall inside ``window``.
    """
    lo, hi = window if window is not None else (curve.steps[0], curve.steps[-1])
    tol = 1e-9 * hi
    mask = (curve.steps >= lo - tol) & (curve.steps <= hi + tol)
    h, y = curve.steps[mask], curve.norms[mask]
    if h.size < 4:
        raise InputError(f"fit window holds {h.size} ladder points, need at least 4")
    if np.any(y <= 0.0):
        return RegularityReport(
            curve.label,
            curve.q,
            alpha_hat=1.0,
            intercept=-math.inf,
            r2=math.nan,
            h_min=float(h[0]),
            h_max=float(h[-1]),
            seminorm=0.0,
            saturated=True,
            slack=slack,
        )
    fit = stats.linregress(np.log(h), np.log(y))
    alpha = float(fit.slope)
    r2 = min(1.0, max(0.0, float(fit.rvalue) ** 2))
    return RegularityReport(
        curve.label,
        curve.q,
        alpha,
        float(fit.intercept),
        r2,
        float(h[0]),
        float(h[-1]),
        nikolskij_seminorm(curve, alpha),
        alpha >= saturation,
        slack=slack,
    )


def averaged_characterization_check(
    g: Field,
    alpha: float,
    q: float,
    H: float,
    window: tuple[float, float] | None = None,
    slack: float = 0.05,
) -> DieningReport:
    """Compare the averaged and plain Nikolskij constants of ``g`` in time.

    K_avg = max_{h <= H} h^-alpha || mean_{s <= h} |Delta^s g| ||_q on [a, b] and
    K_plain = max_{h <= H/2} h^-alpha ||Delta^h g||_q on [a, b]; data are read on
    [a, b + H].

    Args:
        g: Time series or field, sampled on its grid steps.
        alpha: Exponent the constants are normalized with.
        q: Integrability exponent.
        H: Largest averaging step, a whole multiple of dt and at least 2 dt.
        window: Interval [a, b]; defaults to the stored times minus H at the end.
        slack: Relative tolerance on the factor 3 comparison.

    Returns:
        Both constants; ``passed`` holds when K_plain <= 3 K_avg (1 + slack).

    Raises:
        InputError: ``H`` is not a usable multiple of dt.
        RangeError: [a, b + H] leaves the sampled times.
    """
    dt = g.grid.dt
    kH = round(H / dt)
    if kH < 2 or abs(kH * dt - H) > 1e-9 * H:
        raise InputError("H must be a whole multiple of dt, at least 2 dt")
    a, b = window if window is not None else (g.t0, g.t_end - H)
    ia, ib = round((a - g.t0) / dt), round((b - g.t0) / dt)
    if ia < 0 or ib <= ia or ib + kH > g.n_times - 1:
        raise RangeError("window [a, b + H] must lie inside the samples")
    v = g.values
    base = v[ia : ib + 1]
    running = np.zeros(base.shape[:-1])
    k_avg = k_plain = 0.0
    for k in range(1, kH + 1):
        mag = np.sqrt(np.sum((v[ia + k : ib + 1 + k] - base) ** 2, axis=-1))
        running += mag
        h_pow = (k * dt) ** alpha
        avg = norms(g.replace(running[..., None] / k, t0=g.t0 + ia * dt), "Lq", q=q)
        k_avg = max(k_avg, avg / h_pow)
        if 2 * k <= kH:
            plain = norms(g.replace(mag[..., None], t0=g.t0 + ia * dt), "Lq", q=q)
            k_plain = max(k_plain, plain / h_pow)
    return DieningReport(k_avg, k_plain, alpha, H, slack)


def predict_beta(p: float, n: int, setting: Setting) -> Prediction:
    """Exponent guaranteed by the regularity theory for the given setting.

    Outside a case's p-range the prediction is returned with ``applies=False`` and no
    value, never extrapolated.
    """
    if not (math.isfinite(p) and p > 1.0):
        raise InputError(f"p must be > 1, got {p}")
    if int(n) != n or n < 1:
        raise InputError(f"n must be a positive integer, got {n}")
    if setting == "time":
        return Prediction(0.5, True, setting)
    if setting == "space_whole":
        return Prediction(0.25, True, setting)
    if setting == "space_refined_case_a":
        if p < 2.0:
            return Prediction(None, False, setting, "case (a) needs p >= 2")
        return Prediction(min(0.5, 0.25 + 1.0 / p), True, setting)
    if setting == "space_refined_case_b":
        if p > 2.0:
            return Prediction(None, False, setting, "case (b) needs 1 < p <= 2")
        inner = max(
            (p + 2.0 - (2.0 - p) * n / 2.0) / (2.0 * p),
            0.75 - n * (2.0 - p) / 8.0,
            0.25,
        )
        return Prediction(min(0.5, inner), True, setting)
    raise InputError(f"unknown setting {setting!r}")


def sobolev_embedding_exponent(n: int, alpha: float, q: float) -> float:
    """nq / (n - alpha q); ``math.inf`` when every finite exponent is reached."""
    if n < 1 or not 0.0 <= alpha <= 1.0 or q < 1.0:
        raise InputError("need n >= 1, 0 <= alpha <= 1 and q >= 1")
    gap = n - alpha * q
    if gap <= 0.0:
        return math.inf
    return n * q / gap


def embedding_table(n: int) -> tuple[EmbeddingRow, ...]:
    """Integrability of u_t implied by its fractional smoothness in space and space-time."""
    rows = []
    for label, dim, alpha in (
        ("space", n, 0.25),
        ("space_time", n + 1, 0.25),
        ("space_refined", n, 0.5),
    ):
        rows.append(
            EmbeddingRow(label, dim, alpha, 2.0, sobolev_embedding_exponent(dim, alpha, 2.0))
        )
    return tuple(rows)


def _diagonal_step(dt: float, dx: float) -> float | None:
    ratio = Fraction(dx / dt).limit_denominator(64)
    if abs(float(ratio) * dt - dx) > 1e-9 * dx:
        return None
    return ratio.numerator * dt


def _usable(ladder: FloatArray, extent: float) -> FloatArray:
    return ladder[ladder <= 0.5 * extent + 1e-12 * extent]


def ut_regularity_experiment(
    trajectory: Field, spec: ProblemSpec, cfg: RegularityConfig, threads: int = 1
) -> RegularityExperiment:
    """Fit the smoothness of u_t in time, along each space axis and along the diagonals.

    Curves are measured concurrently on ``threads`` workers; results keep plan order,
    so the report does not depend on the thread count.

    Args:
        trajectory: Solved field u on the full grid.
        spec: Problem the field solves; supplies p and the boundary type.
        cfg: Ladder, fit window and tolerance settings.
        threads: Workers for the curve measurements.

    Returns:
        Reports and curves sorted by label, the averaged check (when the window
        is longer than H) and notes on skipped directions.

    Raises:
        InputError: The trim margin is shorter than four time steps.
    """
    grid = trajectory.grid
    a = grid.t_final / 8.0 if cfg.trim is None else cfg.trim
    if a < 4.0 * grid.dt - 1e-9 * grid.dt:
        raise InputError("trim margin must be at least four time steps")
    ut = time_derivative(trajectory)
    window = trim(ut, a)
    span = window.t_end - window.t0
    p, n = spec.model.p, grid.dim
    notes: list[str] = []

    refined: float | None = None
    if grid.periodic:
        case: Setting = "space_refined_case_a" if p >= 2.0 else "space_refined_case_b"
        refined = predict_beta(p, n, case).beta

    plans: list[tuple[str, int, FloatArray, float, float | None]] = [
        ("time", 0, _usable(geometric_ladder(grid.dt, cfg.rungs), span), 0.5, None)
    ]
    for axis in range(n):
        extent = grid.lengths[axis] if grid.periodic else grid.nx[axis] * grid.dx[axis]
        ladder = _usable(geometric_ladder(grid.dx[axis], cfg.rungs), extent)
        plans.append(("space", axis, ladder, 0.25, refined))
        step = _diagonal_step(grid.dt, grid.dx[axis])
        if step is None:
            notes.append(f"diagonal x{axis + 1} skipped: dx/dt is not a small rational")
            continue
        diag = _usable(geometric_ladder(step, cfg.rungs), min(span, extent))
        plans.append(("diagonal", axis, diag, 0.25, None))

    fit_plans = []
    for plan in plans:
        direction, axis, ladder = plan[:3]
        if ladder.size < 4:
            notes.append(f"{direction} x{axis + 1}: ladder too short for a fit")
        else:
            fit_plans.append(plan)

    def measure(plan: tuple[str, int, FloatArray, float, float | None]) -> QuotientCurve:
        direction, axis, ladder = plan[:3]
        return quotient_norm_curve(ut, direction, cfg.q, ladder, a, axis)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        measured = list(executor.map(measure, fit_plans))

    curves, reports = [], []
    for curve, (_, _, ladder, predicted, informative) in zip(measured, fit_plans):
        last = ladder.size - 1 if cfg.fit_max is None else min(cfg.fit_max, ladder.size - 1)
        first = min(cfg.fit_min, max(0, last - 3))
        report = estimate_exponent(
            curve, (ladder[first], ladder[last]), cfg.saturation, cfg.slack
        )
        report = replace(report, predicted=predicted, refined_prediction=informative)
        logger.debug(
            "%s: alpha=%.3f r2=%.4f verdict=%s",
            curve.label,
            report.alpha_hat,
            report.r2,
            report.verdict,
        )
        curves.append(curve)
        reports.append(report)

    diening = None
    H = cfg.diening_H if cfg.diening_H is not None else 8 * grid.dt
    if window.n_times - 1 > round(H / grid.dt):
        diening = averaged_characterization_check(
            window, 0.5, cfg.q, H, slack=cfg.diening_slack
        )
    else:
        notes.append("averaged characterization skipped: window shorter than H")
    order = sorted(range(len(reports)), key=lambda i: curves[i].label)
    return RegularityExperiment(
        tuple(reports[i] for i in order),
        tuple(curves[i] for i in order),
        diening,
        tuple(notes),
    )
