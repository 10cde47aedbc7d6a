"""Sampled suite over every algebraic inequality the regularity argument rests on.

Each check draws its own seeded sample, reduces it to a (min, max) ratio pair and a
verdict. Checks are independent, so they run on a thread pool; rows come back in the
fixed order of ``CHECKS``.
"""

import logging
import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .config import ChecksConfig
from .orlicz import (
    Envelope,
    GrowthModel,
    energy_F,
    equiv_integral_ratio,
    hammer2_ratio,
    lemma_t_backward_ratio,
    lemma_t_ratio,
    lemma_t_symmetric,
    monotonicity_ratio,
    sample_matrix_pairs,
    stress_A,
    young_gap,
)

__all__ = ["CHECKS", "CheckRow", "run_assumption_checks"]

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

YOUNG_TOL = 1e-8
GRADIENT_RTOL = 1e-4
GRADIENT_STEP = 1e-5
STABILITY_TOL = 0.1
# brentq per sample for non-power phi
YOUNG_CAP = 2_000


@dataclass(frozen=True)
class CheckRow:
    check: str
    samples: int
    min_ratio: float
    max_ratio: float
    verdict: str

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def as_dict(self) -> dict[str, object]:
        return {
            "check": self.check,
            "samples": self.samples,
            "min_ratio": self.min_ratio,
            "max_ratio": self.max_ratio,
            "verdict": self.verdict,
        }


def _row(name: str, values: FloatArray, ok: bool) -> CheckRow:
    env = Envelope.of(values)
    finite = math.isfinite(env.lower) and math.isfinite(env.upper)
    verdict = "pass" if ok and finite else "fail"
    return CheckRow(name, env.samples, env.lower, env.upper, verdict)


def _is_quadratic(model: GrowthModel) -> bool:
    phi = model.growth
    return model.mu == 0.0 and phi.kind == "power" and phi.p == 2.0 and phi.scale == 1.0


def check_monotonicity(
    model: GrowthModel, cfg: ChecksConfig, rng: np.random.Generator
) -> CheckRow:
    """Positive ratio whose envelope survives doubling the sample."""
    Q, P = sample_matrix_pairs(rng, 2 * cfg.samples)
    ratio = np.asarray(monotonicity_ratio(model, Q, P).v_ratio)
    half, full = Envelope.of(ratio[: cfg.samples]), Envelope.of(ratio)
    ok = half.lower > 0.0 and half.stable_against(full, STABILITY_TOL)
    return _row("monotonicity", ratio[: cfg.samples], ok)


def check_hammer(
    model: GrowthModel, cfg: ChecksConfig, rng: np.random.Generator
) -> CheckRow:
    """Stress pairing over the shifted weight phi''(mu+|Q|+|Q-P|) |Q-P|^2.

    Args:
        model: Growth model under test.
        cfg: Sample counts from the [checks] section.
        rng: Generator spawned for this check alone.

    Returns:
        The envelope row; it passes when every sampled ratio is positive.
    """
    Q, P = sample_matrix_pairs(rng, cfg.samples)
    ratio = np.asarray(monotonicity_ratio(model, Q, P).hammer_ratio)
    return _row("hammer", ratio, bool(np.min(ratio) > 0.0))


def check_lemma_t(
    model: GrowthModel, cfg: ChecksConfig, rng: np.random.Generator
) -> CheckRow:
    """Forward time-difference inequality at unit step.

    For the quadratic model the ratio is exactly 1/2 and anything else fails.
    """
    Q, P = sample_matrix_pairs(rng, cfg.samples)
    ratio = np.asarray(lemma_t_ratio(model, Q, P, 1.0))
    ok = bool(np.min(ratio) > 0.0)
    if _is_quadratic(model):
        ok = ok and bool(np.max(np.abs(ratio - 0.5)) <= 1e-12)
    return _row("lemma_t_forward", ratio, ok)


def check_lemma_t_backward(
    model: GrowthModel, cfg: ChecksConfig, rng: np.random.Generator
) -> CheckRow:
    """Backward counterpart; every ratio must be negative."""
    Q, P = sample_matrix_pairs(rng, cfg.samples)
    ratio = np.asarray(lemma_t_backward_ratio(model, P, Q, 1.0))
    return _row("lemma_t_backward", ratio, bool(np.max(ratio) < 0.0))


def check_lemma_t_symmetric(
    model: GrowthModel, cfg: ChecksConfig, rng: np.random.Generator
) -> CheckRow:
    """Three-point form sandwiched by the forward/backward envelopes of the same sample.

    The ratio reported is the signed value over the sum of both V gaps.
    """
    now, nxt = sample_matrix_pairs(rng, cfg.samples)
    prev = now - (nxt - now) * rng.uniform(0.1, 10.0, size=(cfg.samples, 1, 1))
    forward = Envelope.of(lemma_t_ratio(model, now, nxt, 1.0))
    backward = Envelope.of(-np.asarray(lemma_t_backward_ratio(model, prev, now, 1.0)))
    form = lemma_t_symmetric(model, prev, now, nxt, 1.0)
    gaps = np.asarray(form.forward_gap) + np.asarray(form.backward_gap)
    ok = bool(np.all(form.within(forward, backward)))
    return _row("lemma_t_symmetric", np.asarray(form.value) / gaps, ok)


def check_young(
    model: GrowthModel, cfg: ChecksConfig, rng: np.random.Generator
) -> CheckRow:
    """Young gap phi*(a) + phi(b) - ab on uniform samples in [0, 100).

    Args:
        model: Growth model whose Orlicz function is tested.
        cfg: Sample counts from the [checks] section.
        rng: Generator spawned for this check alone.

    Returns:
        The gap envelope. Non-power kinds use at most YOUNG_CAP samples since
        their conjugate is a numerical supremum.
    """
    phi = model.growth
    count = cfg.samples if phi.kind == "power" else min(cfg.samples, YOUNG_CAP)
    a, b = rng.uniform(0.0, 100.0, size=(2, count))
    gap = np.asarray(young_gap(phi, a, b))
    return _row("young", gap, bool(np.min(gap) >= -YOUNG_TOL))


def check_young_equality(
    model: GrowthModel, cfg: ChecksConfig, rng: np.random.Generator
) -> CheckRow:
    """Young's inequality is an equality at a = phi'(b)."""
    phi = model.growth
    count = cfg.samples if phi.kind == "power" else min(cfg.samples, YOUNG_CAP)
    b = rng.uniform(0.0, 100.0, size=count)
    a = np.asarray(phi.first(b))
    gap = np.asarray(young_gap(phi, a, b)) / np.maximum(1.0, a * b)
    return _row("young_equality", gap, bool(np.max(np.abs(gap)) <= YOUNG_TOL))


def check_gradient(
    model: GrowthModel, cfg: ChecksConfig, rng: np.random.Generator
) -> CheckRow:
    """Central differences of F against A, relative error per point."""
    count = cfg.gradient_points
    mag = 10.0 ** rng.uniform(-1.0, 1.0, size=(count, 1, 1))
    Q = rng.standard_normal((count, 2, 2)) * mag
    size = np.sqrt(np.sum(Q * Q, axis=(-2, -1)))
    h = GRADIENT_STEP * size
    fd = np.empty_like(Q)
    for i in range(2):
        for j in range(2):
            e = np.zeros((1, 2, 2))
            e[0, i, j] = 1.0
            step = h[:, None, None] * e
            up = np.asarray(energy_F(model, Q + step))
            down = np.asarray(energy_F(model, Q - step))
            fd[:, i, j] = (up - down) / (2.0 * h)
    stress = stress_A(model, Q)
    err = np.sqrt(np.sum((fd - stress) ** 2, axis=(-2, -1)))
    rel = err / np.sqrt(np.sum(stress * stress, axis=(-2, -1)))
    return _row("gradient", rel, bool(np.max(rel) <= GRADIENT_RTOL))


def check_equivalence(
    model: GrowthModel, cfg: ChecksConfig, rng: np.random.Generator
) -> CheckRow:
    """Integral of a over the segment [a0, a1] against a at the endpoints."""
    phi = model.growth
    pairs = rng.standard_normal((cfg.equiv_points, 2, 2))
    pairs *= 10.0 ** rng.uniform(-2.0, 2.0, size=(cfg.equiv_points, 1, 1))
    ratio = np.array([equiv_integral_ratio(phi, a0, a1) for a0, a1 in pairs])
    ok = bool(np.min(ratio) > 0.0)
    if phi.kind == "power" and phi.p == 2.0:
        ok = ok and bool(np.max(np.abs(ratio - 1.0)) <= 1e-9)
    return _row("equivalence", ratio, ok)


def check_hammer2(
    model: GrowthModel, cfg: ChecksConfig, rng: np.random.Generator
) -> CheckRow:
    Q, P = sample_matrix_pairs(rng, cfg.samples)
    ratio = np.asarray(hammer2_ratio(model, Q, P - Q))
    return _row("hammer2", ratio, bool(np.min(ratio) > 0.0))


def check_delta2(
    model: GrowthModel, cfg: ChecksConfig, rng: np.random.Generator
) -> CheckRow:
    """Doubling constant envelope; ``cfg`` and ``rng`` are unused."""
    env = model.growth.delta2_envelope()
    ok = env.lower > 0.0 and math.isfinite(env.upper)
    return CheckRow("delta2", env.samples, env.lower, env.upper, "pass" if ok else "fail")


Check = Callable[[GrowthModel, ChecksConfig, np.random.Generator], CheckRow]

CHECKS: tuple[tuple[str, Check], ...] = (
    ("delta2", check_delta2),
    ("monotonicity", check_monotonicity),
    ("hammer", check_hammer),
    ("hammer2", check_hammer2),
    ("equivalence", check_equivalence),
    ("young", check_young),
    ("young_equality", check_young_equality),
    ("gradient", check_gradient),
    ("lemma_t_forward", check_lemma_t),
    ("lemma_t_backward", check_lemma_t_backward),
    ("lemma_t_symmetric", check_lemma_t_symmetric),
)


def run_assumption_checks(
    model: GrowthModel, cfg: ChecksConfig, seed: int, threads: int = 1
) -> list[CheckRow]:
    """Run every check with its own child seed.

    Args:
        model: Growth model to check.
        cfg: The [checks] section.
        seed: Root seed; each check gets one spawned child.
        threads: Worker threads. Rows are identical for any value.

    Returns:
        One row per entry of CHECKS, in that order.
    """
    seeds = np.random.SeedSequence(seed).spawn(len(CHECKS))

    def run(item: tuple[tuple[str, Check], np.random.SeedSequence]) -> CheckRow:
        (name, check), child = item
        row = check(model, cfg, np.random.default_rng(child))
        logger.debug("%s: [%.6g, %.6g] %s", name, row.min_ratio, row.max_ratio, row.verdict)
        return row

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        return list(executor.map(run, zip(CHECKS, seeds)))
