"""Nonlinearity algebra: Orlicz functions, growth models and inequality checkers.

A growth model bundles the energy density ``F``, its gradient ``A = D_Q F`` and the
``V``-function. Matrices live in the last two axes of an array (``N x n``); any
leading axes are treated as a batch. Scalars and 1-d arrays are read as a single
matrix.
"""

import math
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any, Final, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, optimize

from .errors import DegenerateInputError, InputError, NumericError

__all__ = [
    "OrliczFunction",
    "GrowthModel",
    "Envelope",
    "MonotonicityRatio",
    "SymmetricForm",
    "stress_A",
    "v_map",
    "energy_F",
    "conjugate",
    "young_gap",
    "monotonicity_ratio",
    "equiv_integral_ratio",
    "bregman_gap",
    "lemma_t_ratio",
    "lemma_t_backward_ratio",
    "lemma_t_symmetric",
    "directional_ratio",
    "hammer2_ratio",
    "sample_matrix_pairs",
    "sample_envelope",
]

FloatArray = NDArray[np.float64]
OrliczKind = Literal["power", "max_power", "carreau"]
Variant = Literal["p_growth", "orlicz"]
RatioKind = Literal["monotonicity", "hammer", "lemma_t", "lemma_t_backward"]

_ORLICZ_KINDS: Final[tuple[str, ...]] = ("power", "max_power", "carreau")
_QUAD_EPSREL: Final[float] = 1e-11
_QUAD_EPSABS: Final[float] = 1e-14


def _as_float(x: ArrayLike) -> FloatArray:
    return np.asarray(x, dtype=np.float64)


def _require_finite(x: FloatArray, name: str) -> None:
    if not np.all(np.isfinite(x)):
        raise InputError(f"{name} has non-finite entries")


def _msum(x: FloatArray) -> FloatArray:
    """Sum over the matrix axes (last two), or over everything below 2-d."""
    if x.ndim >= 2:
        return np.asarray(np.sum(x, axis=(-2, -1)))
    return np.asarray(np.sum(x))


def _frob(Q: FloatArray) -> FloatArray:
    return np.sqrt(_msum(Q * Q))


def _expand(r: FloatArray, Q: FloatArray) -> FloatArray:
    """Broadcast a per-matrix quantity back against the matrix axes."""
    return r[..., None, None] if Q.ndim >= 2 else r


def _maybe_scalar(x: FloatArray) -> Any:
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True)
class OrliczFunction:
    """Convex growth function with phi'(0) = 0 and phi''(t) t^2 ~ phi(t).

    ``power``: scale * t^p / p. ``max_power``: the C^1 function whose derivative is
    max(t^{p-1}, t^{q-1}) (comparable to max(t^p, t^q)). ``carreau``:
    nu_inf t^2 / 2 + nu / p ((mu^2 + t^2)^{p/2} - mu^p).
    """

    kind: OrliczKind = "power"
    p: float = 2.0
    scale: float = 1.0
    q_exp: float = 2.0
    nu: float = 1.0
    nu_inf: float = 0.0
    mu: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in _ORLICZ_KINDS:
            raise InputError(f"unknown Orlicz kind {self.kind!r}")
        if not (math.isfinite(self.p) and self.p > 1.0):
            raise InputError(f"Orlicz exponent must be > 1, got {self.p}")
        if not self.scale > 0.0:
            raise InputError("scale must be positive")
        if self.kind == "max_power" and not self.q_exp > 1.0:
            raise InputError("q_exp must be > 1")
        if self.kind == "carreau":
            if not self.nu > 0.0 or self.nu_inf < 0.0 or self.mu < 0.0:
                raise InputError("carreau needs nu > 0, nu_inf >= 0, mu >= 0")

    def _exponents(self) -> tuple[float, float]:
        return min(self.p, self.q_exp), max(self.p, self.q_exp)

    def value(self, t: ArrayLike) -> Any:
        t = np.abs(_as_float(t))
        if self.kind == "power":
            out = self.scale * np.power(t, self.p) / self.p
        elif self.kind == "max_power":
            lo, hi = self._exponents()
            out = np.where(
                t <= 1.0,
                np.power(t, lo) / lo,
                1.0 / lo + (np.power(t, hi) - 1.0) / hi,
            )
        else:
            if self.mu > 0.0:
                lifted = self.mu**self.p * np.expm1(
                    0.5 * self.p * np.log1p((t / self.mu) ** 2)
                )
            else:
                lifted = np.power(t, self.p)
            out = 0.5 * self.nu_inf * t * t + self.nu * lifted / self.p
        return _maybe_scalar(np.asarray(out, dtype=np.float64))

    def first(self, t: ArrayLike) -> Any:
        t = np.abs(_as_float(t))
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "power":
                out = self.scale * np.power(t, self.p - 1.0)
            elif self.kind == "max_power":
                lo, hi = self._exponents()
                out = np.where(t <= 1.0, np.power(t, lo - 1.0), np.power(t, hi - 1.0))
            else:
                base = self.mu**2 + t * t
                out = self.nu_inf * t + self.nu * np.where(
                    t > 0.0, np.power(base, 0.5 * (self.p - 2.0)) * t, 0.0
                )
        return _maybe_scalar(np.asarray(out, dtype=np.float64))

    def second(self, t: ArrayLike) -> Any:
        t = np.abs(_as_float(t))
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "power":
                out = self.scale * (self.p - 1.0) * np.power(t, self.p - 2.0)
            elif self.kind == "max_power":
                lo, hi = self._exponents()
                out = np.where(
                    t <= 1.0,
                    (lo - 1.0) * np.power(t, lo - 2.0),
                    (hi - 1.0) * np.power(t, hi - 2.0),
                )
            else:
                base = self.mu**2 + t * t
                at_zero = (self.p - 1.0) * np.power(0.0, self.p - 2.0)
                lifted = np.where(
                    base > 0.0,
                    np.power(base, 0.5 * (self.p - 4.0))
                    * ((self.p - 1.0) * t * t + self.mu**2),
                    at_zero,
                )
                out = self.nu_inf + self.nu * lifted
        return _maybe_scalar(np.asarray(out, dtype=np.float64))

    def delta2_envelope(self, t: ArrayLike | None = None) -> "Envelope":
        """Range of phi''(t) t^2 / phi(t) on a log-spaced grid (default 1e-6..1e6)."""
        grid = np.logspace(-6.0, 6.0, 241) if t is None else _as_float(t)
        ratio = np.asarray(self.second(grid)) * grid**2 / np.asarray(self.value(grid))
        return Envelope.of(ratio)

    def to_section(self) -> dict[str, str]:
        out = {"kind": self.kind, "p": repr(self.p)}
        if self.kind == "power":
            out["scale"] = repr(self.scale)
        elif self.kind == "max_power":
            out["q_exp"] = repr(self.q_exp)
        else:
            out.update(
                nu=repr(self.nu), nu_inf=repr(self.nu_inf), carreau_mu=repr(self.mu)
            )
        return out


@dataclass(frozen=True)
class GrowthModel:
    """Energy density F(Q) with p-growth or Orlicz growth and shift mu.

    The stress is radial, A(Q) = a(|Q|) Q; ``coefficient`` is a and
    ``coefficient_slope`` is a'(r) / r.
    """

    variant: Variant = "p_growth"
    p: float = 2.0
    mu: float = 0.0
    phi: OrliczFunction | None = None
    gradient_kind: Literal["full"] = "full"

    def __post_init__(self) -> None:
        if self.variant not in ("p_growth", "orlicz"):
            raise InputError(f"unknown model variant {self.variant!r}")
        if not (math.isfinite(self.mu) and self.mu >= 0.0):
            raise InputError(f"mu must be >= 0, got {self.mu}")
        if self.variant == "p_growth":
            if not (math.isfinite(self.p) and self.p > 1.0):
                raise InputError(f"p must be > 1, got {self.p}")
        elif self.phi is None:
            raise InputError("orlicz models need an Orlicz function")
        if self.gradient_kind != "full":
            raise InputError("only the full gradient is supported")

    @classmethod
    def p_growth(cls, p: float, mu: float = 0.0) -> "GrowthModel":
        return cls(variant="p_growth", p=p, mu=mu)

    @classmethod
    def orlicz(cls, phi: OrliczFunction, mu: float = 0.0) -> "GrowthModel":
        return cls(variant="orlicz", p=phi.p, mu=mu, phi=phi)

    @property
    def growth(self) -> OrliczFunction:
        """The Orlicz function governing the model (t^p / p for p-growth)."""
        if self.phi is not None:
            return self.phi
        return OrliczFunction("power", self.p)

    @property
    def label(self) -> str:
        if self.variant == "p_growth":
            return f"p={self.p:g},mu={self.mu:g}"
        return f"{self.growth.kind}(p={self.p:g}),mu={self.mu:g}"

    def coefficient(self, r: ArrayLike) -> FloatArray:
        r = _as_float(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.variant == "p_growth":
                return np.power(self.mu**2 + r * r, 0.5 * (self.p - 2.0))
            s = self.mu + r
            phi = self.growth
            return np.where(
                s > 0.0,
                np.asarray(phi.first(s)) / s,
                np.asarray(phi.second(np.zeros_like(s))),
            )

    def coefficient_slope(self, r: ArrayLike) -> FloatArray:
        r = _as_float(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.variant == "p_growth":
                if self.p == 2.0:
                    return np.zeros_like(r)
                return (self.p - 2.0) * np.power(self.mu**2 + r * r, 0.5 * (self.p - 4.0))
            s = self.mu + r
            phi = self.growth
            slope = (np.asarray(phi.second(s)) * s - np.asarray(phi.first(s))) / (
                s * s * r
            )
            return np.where(r > 0.0, slope, 0.0)

    def stress(self, Q: ArrayLike) -> FloatArray:
        Q = _as_float(Q)
        r = _frob(Q)
        a = _expand(self.coefficient(r), Q)
        with np.errstate(invalid="ignore"):
            return np.where(_expand(r, Q) > 0.0, a * Q, 0.0)

    def v(self, Q: ArrayLike) -> FloatArray:
        Q = _as_float(Q)
        r = _frob(Q)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.variant == "p_growth":
                b = np.power(self.mu**2 + r * r, 0.25 * (self.p - 2.0))
            else:
                b = np.sqrt(np.asarray(self.growth.first(r + self.mu)) / r)
            return np.where(_expand(r, Q) > 0.0, _expand(b, Q) * Q, 0.0)

    def energy(self, Q: ArrayLike) -> Any:
        Q = _as_float(Q)
        r = _frob(Q)
        if self.variant == "p_growth":
            if self.mu == 0.0:
                return _maybe_scalar(np.power(r, self.p) / self.p)
            lifted = self.mu**self.p * np.expm1(
                0.5 * self.p * np.log1p((r / self.mu) ** 2)
            )
            return _maybe_scalar(lifted / self.p)
        if self.mu == 0.0:
            return _maybe_scalar(np.asarray(self.growth.value(r)))
        return _maybe_scalar(self._line_integral_energy(r))

    def _line_integral_energy(self, r: FloatArray) -> FloatArray:
        """F(Q) = int_0^1 A(sQ).Q ds = a(r) r^2 int_0^1 s a(sr) / a(r) ds."""
        flat = np.atleast_1d(r).ravel()
        scale = self.coefficient(flat)

        def integrand(s: float) -> FloatArray:
            return np.where(flat > 0.0, s * self.coefficient(s * flat) / scale, 0.0)

        res, err, info = integrate.quad_vec(
            integrand,
            0.0,
            1.0,
            epsabs=_QUAD_EPSABS,
            epsrel=_QUAD_EPSREL,
            norm="max",
            full_output=True,
        )
        if not info.success:
            raise NumericError(
                "energy quadrature did not converge",
                message=info.message,
                error=float(np.max(err)) if np.ndim(err) else float(err),
            )
        out = np.where(flat > 0.0, scale * flat * flat * res, 0.0)
        return out.reshape(np.shape(r))

    def stress_jacobian(self, Q: ArrayLike, floor: float = 0.0) -> FloatArray:
        """D_Q A(Q) as an array (..., N, n, N, n), eigenvalues clipped to [floor, 1/floor].

        D_Q A = a I + (a'/r) Q (x) Q has eigenvalue a across Q and a + a' r along Q.
        """
        Q = _as_float(Q)
        if Q.ndim < 2:
            raise InputError("stress_jacobian needs matrices in the last two axes")
        N, n = Q.shape[-2:]
        r = _frob(Q)
        upper = 1.0 / floor if floor > 0.0 else np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            a = self.coefficient(r)
            along = a + np.where(r > 0.0, self.coefficient_slope(r) * r * r, 0.0)
            q = np.where(_expand(r, Q) > 0.0, Q / _expand(r, Q), 0.0)
        a = np.clip(np.nan_to_num(a, nan=upper, posinf=upper), floor, upper)
        along = np.clip(np.nan_to_num(along, nan=upper, posinf=upper), floor, upper)
        qq = q.reshape(*q.shape[:-2], N * n)
        outer = qq[..., :, None] * qq[..., None, :]
        eye = np.eye(N * n)
        jac = a[..., None, None] * eye + (along - a)[..., None, None] * outer
        return jac.reshape(*Q.shape[:-2], N, n, N, n)

    def to_section(self) -> dict[str, str]:
        if self.variant == "p_growth":
            return {"variant": "p_growth", "p": repr(self.p), "mu": repr(self.mu)}
        return {"variant": "orlicz", "mu": repr(self.mu), **self.growth.to_section()}

    @classmethod
    def from_section(cls, section: Mapping[str, Any]) -> "GrowthModel":
        """Build a model from a ``[model]`` mapping (values may be strings).

        ``mu`` is always the model shift; ``carreau_mu`` is the regularization inside
        a carreau phi.
        """

        def num(key: str, default: float | None = None) -> float:
            if key not in section:
                if default is None:
                    raise InputError(f"[model] is missing {key!r}")
                return default
            return float(section[key])

        variant = str(section.get("variant", "p_growth"))
        if variant == "p_growth":
            return cls.p_growth(num("p"), num("mu", 0.0))
        if variant != "orlicz":
            raise InputError(f"unknown model variant {variant!r}")
        kind = str(section.get("kind", "power"))
        if kind == "carreau":
            phi = OrliczFunction(
                "carreau",
                num("p"),
                nu=num("nu", 1.0),
                nu_inf=num("nu_inf", 0.0),
                mu=num("carreau_mu", 0.0),
            )
        elif kind == "max_power":
            phi = OrliczFunction("max_power", num("p"), q_exp=num("q_exp"))
        elif kind == "power":
            phi = OrliczFunction("power", num("p"), scale=num("scale", 1.0))
        else:
            raise InputError(f"unknown Orlicz kind {kind!r}")
        return cls.orlicz(phi, num("mu", 0.0))


@dataclass(frozen=True)
class Envelope:
    """Empirical [lower, upper] range of a sampled ratio."""

    lower: float
    upper: float
    samples: int

    @classmethod
    def of(cls, values: ArrayLike) -> "Envelope":
        v = _as_float(values).ravel()
        if v.size == 0:
            raise InputError("cannot build an envelope from no samples")
        return cls(float(np.min(v)), float(np.max(v)), int(v.size))

    @property
    def spread(self) -> float:
        return self.upper / self.lower if self.lower > 0.0 else math.inf

    def widened(self, slack: float) -> "Envelope":
        return Envelope(self.lower * (1.0 - slack), self.upper * (1.0 + slack), self.samples)

    def contains(self, values: ArrayLike) -> bool:
        v = _as_float(values)
        return bool(np.all((v >= self.lower) & (v <= self.upper)))

    def stable_against(self, other: "Envelope", tol: float = 0.1) -> bool:
        return math.isclose(self.lower, other.lower, rel_tol=tol) and math.isclose(
            self.upper, other.upper, rel_tol=tol
        )


@dataclass(frozen=True)
class MonotonicityRatio:
    """(A(Q)-A(P)).(Q-P) against |V(Q)-V(P)|^2 and phi''(mu+|Q|+|Q-P|)|Q-P|^2."""

    v_ratio: Any
    hammer_ratio: Any


@dataclass(frozen=True)
class SymmetricForm:
    """Three-point form: value = B(Q, Q+) - B(Q, Q-) with both V gaps."""

    value: Any
    forward_gap: Any
    backward_gap: Any

    def within(self, forward: Envelope, backward: Envelope) -> Any:
        """Signed sandwich with measured constants for the forward/backward ratios."""
        lo = forward.lower * self.forward_gap - backward.upper * self.backward_gap
        hi = forward.upper * self.forward_gap - backward.lower * self.backward_gap
        tol = 1e-12 * (np.abs(self.forward_gap) + np.abs(self.backward_gap))
        return (self.value >= lo - tol) & (self.value <= hi + tol)


def stress_A(model: GrowthModel, Q: ArrayLike) -> FloatArray:
    """A(Q); continuous extension A(0) = 0."""
    Q = _as_float(Q)
    _require_finite(Q, "Q")
    return model.stress(Q)


def v_map(model: GrowthModel, Q: ArrayLike) -> FloatArray:
    Q = _as_float(Q)
    _require_finite(Q, "Q")
    return model.v(Q)


def energy_F(model: GrowthModel, Q: ArrayLike) -> Any:
    Q = _as_float(Q)
    _require_finite(Q, "Q")
    return model.energy(Q)


def _conjugate_scalar(phi: OrliczFunction, s: float) -> float:
    if s == 0.0:
        return 0.0
    if phi.kind == "power":
        dual = phi.p / (phi.p - 1.0)
        return float(phi.scale ** (1.0 - dual) * s**dual / dual)
    hi = 1.0
    while float(phi.first(hi)) < s:
        hi *= 2.0
        if hi > 1e300:
            raise NumericError("could not bracket the conjugate maximizer", s=s)
    try:
        a = optimize.brentq(
            lambda x: float(phi.first(x)) - s, 0.0, hi, xtol=1e-300, maxiter=500
        )
    except (RuntimeError, ValueError) as exc:
        raise NumericError("conjugate maximization failed", s=s, bracket=hi) from exc
    return max(a * s - float(phi.value(a)), 0.0)


def conjugate(phi: OrliczFunction, s: ArrayLike) -> Any:
    """phi*(s) = sup_{a > 0} (a s - phi(a)).

    Closed form for the power kind; otherwise the maximizer is bracketed and located
    from the first-order condition phi'(a) = s.
    """
    arr = _as_float(s)
    _require_finite(arr, "s")
    arr = np.abs(arr)
    if arr.ndim == 0:
        return _conjugate_scalar(phi, float(arr))
    if phi.kind == "power":
        dual = phi.p / (phi.p - 1.0)
        return phi.scale ** (1.0 - dual) * np.power(arr, dual) / dual
    flat = [_conjugate_scalar(phi, float(x)) for x in arr.ravel()]
    return np.asarray(flat, dtype=np.float64).reshape(arr.shape)


def young_gap(phi: OrliczFunction, a: ArrayLike, b: ArrayLike) -> Any:
    """phi*(a) + phi(b) - a b, non-negative up to rounding."""
    a_arr, b_arr = _as_float(a), _as_float(b)
    _require_finite(a_arr, "a")
    _require_finite(b_arr, "b")
    gap = _as_float(conjugate(phi, a_arr)) + _as_float(phi.value(b_arr)) - a_arr * b_arr
    return _maybe_scalar(gap)


def _pair_difference(Q: FloatArray, P: FloatArray) -> tuple[FloatArray, FloatArray]:
    _require_finite(Q, "Q")
    _require_finite(P, "P")
    diff = Q - P
    dist = _frob(diff)
    if np.any(dist == 0.0):
        raise DegenerateInputError("ratio undefined for Q == P")
    return diff, dist


def monotonicity_ratio(
    model: GrowthModel, Q: ArrayLike, P: ArrayLike
) -> MonotonicityRatio:
    """(A(Q) - A(P)).(Q - P) over |V(Q) - V(P)|^2 and over the hammer weight."""
    Q, P = np.broadcast_arrays(_as_float(Q), _as_float(P))
    diff, dist = _pair_difference(Q, P)
    num = _msum((model.stress(Q) - model.stress(P)) * diff)
    dv = model.v(Q) - model.v(P)
    v_den = _msum(dv * dv)
    weight = np.asarray(model.growth.second(model.mu + _frob(Q) + dist))
    return MonotonicityRatio(
        v_ratio=_maybe_scalar(num / v_den),
        hammer_ratio=_maybe_scalar(num / (weight * dist * dist)),
    )


def equiv_integral_ratio(phi: OrliczFunction, a0: ArrayLike, a1: ArrayLike) -> float:
    """phi''(|a1|+|a0|) / int_0^1 phi''(|theta a0 + (1-theta) a1|) dtheta.

    The segment's closest approach to the origin is passed to the integrator as a
    breakpoint so a possible singularity of phi'' at 0 sits on an interval end.
    """
    v0 = np.atleast_1d(_as_float(a0))
    v1 = np.atleast_1d(_as_float(a1))
    _require_finite(v0, "a0")
    _require_finite(v1, "a1")
    n0, n1 = float(np.linalg.norm(v0)), float(np.linalg.norm(v1))
    if n0 == 0.0 and n1 == 0.0:
        raise DegenerateInputError("a0 and a1 are both zero")
    d = v0 - v1
    dd = float(d @ d)
    points: list[float] = []
    if dd > 0.0:
        closest = -float(v1 @ d) / dd
        if 0.0 < closest < 1.0:
            points.append(closest)

    def integrand(theta: float) -> float:
        return float(phi.second(float(np.linalg.norm(v1 + theta * d))))

    result = integrate.quad(
        integrand, 0.0, 1.0, points=points or None, limit=200, epsrel=1e-10, full_output=1
    )
    if len(result) > 3:
        raise NumericError(
            "equivalence integral did not converge",
            message=result[3],
            error=result[1],
            breakpoints=points,
        )
    return float(phi.second(n0 + n1)) / float(result[0])


def _bregman_over_gap(
    model: GrowthModel, Q0: FloatArray, Q1: FloatArray
) -> tuple[FloatArray, FloatArray]:
    """Return (B / gap, gap) with B = F(Q1) - F(Q0) - A(Q0).(Q1-Q0), gap = |V(Q1)-V(Q0)|^2.

    B is evaluated as int_0^1 (A(Q0 + s D) - A(Q0)).D ds, normalized per pair by the
    V gap so every entry of the vector quadrature is O(1).
    """
    Q0, Q1 = np.broadcast_arrays(Q0, Q1)
    delta, _ = _pair_difference(Q1, Q0)
    dv = model.v(Q1) - model.v(Q0)
    gap = _msum(dv * dv)
    base = model.stress(Q0)

    def integrand(s: float) -> FloatArray:
        return np.atleast_1d(_msum((model.stress(Q0 + s * delta) - base) * delta) / gap)

    res, err, info = integrate.quad_vec(
        integrand,
        0.0,
        1.0,
        epsabs=_QUAD_EPSABS,
        epsrel=_QUAD_EPSREL,
        norm="max",
        limit=20000,
        full_output=True,
    )
    if not info.success:
        raise NumericError("Bregman quadrature did not converge", message=info.message)
    return np.asarray(res).reshape(np.shape(gap)), gap


def bregman_gap(model: GrowthModel, Q: ArrayLike, P: ArrayLike) -> Any:
    """F(P) - F(Q) - A(Q).(P - Q)."""
    ratio, gap = _bregman_over_gap(model, _as_float(Q), _as_float(P))
    return _maybe_scalar(ratio * gap)


def _check_step(h: float) -> None:
    if not (math.isfinite(h) and h > 0.0):
        raise InputError(f"h must be a positive finite number, got {h}")


def lemma_t_ratio(
    model: GrowthModel, Q_now: ArrayLike, Q_next: ArrayLike, h: float
) -> Any:
    """[D^h F - A(Q_now).D^h Q] h / |V(Q_next) - V(Q_now)|^2 (forward form).

    Bounded between two positive constants depending only on the model.
    """
    _check_step(h)
    ratio, _ = _bregman_over_gap(model, _as_float(Q_now), _as_float(Q_next))
    return _maybe_scalar(ratio)


def lemma_t_backward_ratio(
    model: GrowthModel, Q_prev: ArrayLike, Q_now: ArrayLike, h: float
) -> Any:
    """[D^{-h} F - A(Q_now).D^{-h} Q] h / |V(Q_now) - V(Q_prev)|^2; always negative."""
    _check_step(h)
    ratio, _ = _bregman_over_gap(model, _as_float(Q_now), _as_float(Q_prev))
    return _maybe_scalar(-ratio)


def lemma_t_symmetric(
    model: GrowthModel,
    Q_prev: ArrayLike,
    Q_now: ArrayLike,
    Q_next: ArrayLike,
    h: float,
) -> SymmetricForm:
    """2h [ (F(Q+) - F(Q-)) / 2h - A(Q).(Q+ - Q-) / 2h ] with both V gaps."""
    _check_step(h)
    now = _as_float(Q_now)
    fwd, fwd_gap = _bregman_over_gap(model, now, _as_float(Q_next))
    bwd, bwd_gap = _bregman_over_gap(model, now, _as_float(Q_prev))
    return SymmetricForm(
        value=_maybe_scalar(fwd * fwd_gap - bwd * bwd_gap),
        forward_gap=_maybe_scalar(fwd_gap),
        backward_gap=_maybe_scalar(bwd_gap),
    )


def directional_ratio(
    model: GrowthModel, gradients: ArrayLike, axis: int, steps: int
) -> FloatArray:
    """Forward ratios for gradient pairs (Q(z), Q(z + steps e_axis)) of a sampled field.

    ``gradients`` has shape (..., N, n); ``axis`` indexes a leading axis. Pairs with
    identical gradients are dropped.
    """
    g = _as_float(gradients)
    if steps <= 0 or g.shape[axis] <= steps:
        raise InputError("steps must be positive and smaller than the axis length")
    lead = g.ndim - 2
    if not -lead <= axis < lead:
        raise InputError("axis must index a leading (non-matrix) axis")
    now = np.moveaxis(g, axis, 0)[:-steps].reshape(-1, *g.shape[-2:])
    nxt = np.moveaxis(g, axis, 0)[steps:].reshape(-1, *g.shape[-2:])
    keep = _frob(nxt - now) > 0.0
    if not np.any(keep):
        return np.zeros(0)
    ratio, _ = _bregman_over_gap(model, now[keep], nxt[keep])
    return np.atleast_1d(ratio)


def hammer2_ratio(model: GrowthModel, Q: ArrayLike, dQ: ArrayLike) -> Any:
    """|D_Q V(Q)[dQ]|^2 / (phi''(mu + |Q|) |dQ|^2) by a central difference in Q."""
    Q, dQ = np.broadcast_arrays(_as_float(Q), _as_float(dQ))
    _require_finite(Q, "Q")
    _require_finite(dQ, "dQ")
    size = _frob(dQ)
    if np.any(size == 0.0):
        raise DegenerateInputError("direction dQ must be non-zero")
    step = 1e-6 * np.maximum(_frob(Q), 1e-3) / size
    eps = _expand(step, Q)
    dv = (model.v(Q + eps * dQ) - model.v(Q - eps * dQ)) / (2.0 * eps)
    weight = np.asarray(model.growth.second(model.mu + _frob(Q)))
    return _maybe_scalar(_msum(dv * dv) / (weight * size * size))


def sample_matrix_pairs(
    rng: np.random.Generator, samples: int, shape: tuple[int, int] = (2, 2)
) -> tuple[FloatArray, FloatArray]:
    """Random (Q, P) with magnitudes spread over 1e-2..1e2 and mixed separations."""
    mag = 10.0 ** rng.uniform(-2.0, 2.0, size=(samples, 1, 1))
    Q = rng.standard_normal((samples, *shape)) * mag
    rel = 10.0 ** rng.uniform(-2.0, 1.0, size=(samples, 1, 1))
    size = np.sqrt(np.sum(Q * Q, axis=(-2, -1), keepdims=True))
    P = Q + rng.standard_normal((samples, *shape)) * rel * size
    return Q, P


def sample_envelope(
    model: GrowthModel,
    ratio: RatioKind,
    samples: int,
    seed: int | np.random.SeedSequence,
    shape: tuple[int, int] = (2, 2),
) -> Envelope:
    """Seeded Monte-Carlo envelope of one of the pair ratios.

    Args:
        model: Growth model to sample.
        ratio: Which ratio; ``lemma_t_backward`` is negated so the envelope is positive.
        samples: Number of (Q, P) pairs.
        seed: Seed or seed sequence for a fresh generator.
        shape: Matrix shape (N, n) of each sample.

    Returns:
        Smallest and largest sampled value.

    Raises:
        InputError: Unknown ``ratio``.
    """
    rng = np.random.default_rng(seed)
    Q, P = sample_matrix_pairs(rng, samples, shape)
    if ratio == "monotonicity":
        values = monotonicity_ratio(model, Q, P).v_ratio
    elif ratio == "hammer":
        values = monotonicity_ratio(model, Q, P).hammer_ratio
    elif ratio == "lemma_t":
        values = lemma_t_ratio(model, Q, P, 1.0)
    elif ratio == "lemma_t_backward":
        values = -np.asarray(lemma_t_backward_ratio(model, P, Q, 1.0))
    else:
        raise InputError(f"unknown ratio {ratio!r}")
    return Envelope.of(values)
