"""Closed-form scenario descriptors and manufactured forcing.

Descriptors are strings such as ``exp(-t)*sin(2*pi*x)``; vector fields separate
components with ``;``. The grammar is sums and products of polynomials in ``t``, ``x``,
``y`` with ``sin``, ``cos`` and ``exp`` (``pi`` and ``E`` are constants).
"""

from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from tokenize import TokenError
from typing import Any

import numpy as np
import sympy as sp
from numpy.typing import NDArray
from sympy.parsing.sympy_parser import parse_expr, standard_transformations

from .errors import DescriptorError, InputError
from .grids import Field, SpaceTimeGrid
from .orlicz import GrowthModel

__all__ = ["ClosedForm", "Expression", "ManufacturedForcing", "manufactured_forcing"]

FloatArray = NDArray[np.float64]

T, X, Y = sp.symbols("t x y", real=True)
_SPACE = (X, Y)
_FUNCTIONS = (sp.sin, sp.cos, sp.exp)
_NAMES: dict[str, Any] = {
    "t": T,
    "x": X,
    "y": Y,
    "sin": sp.sin,
    "cos": sp.cos,
    "exp": sp.exp,
    "pi": sp.pi,
    "E": sp.E,
}
_GLOBALS: dict[str, Any] = {
    "Integer": sp.Integer,
    "Float": sp.Float,
    "Rational": sp.Rational,
    "Symbol": sp.Symbol,
    "Function": sp.Function,
    "__builtins__": {},
}


class ClosedForm(ABC):
    """Vector function of (t, x[, y]) evaluated on numpy arrays."""

    dim: int
    components: int

    @abstractmethod
    def evaluate(self, t: Any, coords: Sequence[Any]) -> FloatArray:
        """Values with a trailing component axis, broadcast over ``t`` and ``coords``."""

    def at_time(self, grid: SpaceTimeGrid, t: float) -> FloatArray:
        return self.evaluate(np.float64(t), grid.mesh())

    def sample(self, grid: SpaceTimeGrid) -> Field:
        mesh = grid.mesh()
        t = grid.times.reshape(-1, *([1] * grid.dim))
        values = self.evaluate(t, [m[None, ...] for m in mesh])
        return Field(grid, values)


def _validate(expr: sp.Expr, text: str, dim: int) -> None:
    allowed = {T, *_SPACE[:dim]}
    extra = expr.free_symbols - allowed
    if extra:
        names = ", ".join(sorted(str(s) for s in extra))
        raise DescriptorError(f"unsupported symbol(s) {names} in {text!r}")
    for node in sp.preorder_traversal(expr):
        if isinstance(node, sp.Function) and not isinstance(node, _FUNCTIONS):
            raise DescriptorError(f"unsupported function {node.func} in {text!r}")
        if isinstance(node, sp.Pow) and node.base is not sp.E:
            if not (node.exp.is_Integer and int(node.exp) >= 0):
                raise DescriptorError(f"only whole non-negative powers allowed in {text!r}")


def _parse_component(text: str, dim: int) -> sp.Expr:
    if not text.strip():
        raise DescriptorError("empty expression component")
    try:
        expr = parse_expr(
            text,
            local_dict=dict(_NAMES),
            global_dict=dict(_GLOBALS),
            transformations=standard_transformations,
            evaluate=True,
        )
    except (SyntaxError, TokenError, TypeError, NameError, AttributeError) as exc:
        raise DescriptorError(f"cannot parse {text!r}: {exc}") from exc
    if not isinstance(expr, sp.Expr):
        raise DescriptorError(f"{text!r} is not a scalar expression")
    _validate(expr, text, dim)
    return expr


def _lambdify(expr: sp.Expr, dim: int) -> Callable[..., Any]:
    return sp.lambdify((T, *_SPACE[:dim]), expr, modules="numpy")


def _broadcast(values: Sequence[Any], t: Any, coords: Sequence[Any]) -> FloatArray:
    shape = np.broadcast_shapes(np.shape(t), *(np.shape(c) for c in coords))
    return np.stack(
        [np.broadcast_to(np.asarray(v, dtype=np.float64), shape) for v in values], axis=-1
    )


@dataclass(frozen=True)
class Expression(ClosedForm):
    """Parsed descriptor with one sympy expression per component."""

    text: str
    exprs: tuple[sp.Expr, ...]
    dim: int = 1
    _funcs: tuple[Callable[..., Any], ...] = field(
        init=False, repr=False, compare=False, default=()
    )

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise InputError("descriptors live in one or two space dimensions")
        object.__setattr__(
            self, "_funcs", tuple(_lambdify(e, self.dim) for e in self.exprs)
        )

    @classmethod
    def parse(cls, text: str, dim: int = 1) -> "Expression":
        exprs = tuple(_parse_component(p, dim) for p in text.split(";"))
        return cls(text.strip(), exprs, dim)

    @classmethod
    def zero(cls, dim: int = 1, components: int = 1) -> "Expression":
        return cls(";".join(["0"] * components), (sp.Integer(0),) * components, dim)

    @property
    def components(self) -> int:  # type: ignore[override]
        return len(self.exprs)

    @cached_property
    def is_zero(self) -> bool:
        return all(e == 0 for e in self.exprs)

    def diff(self, symbol: sp.Symbol) -> "Expression":
        exprs = tuple(sp.diff(e, symbol) for e in self.exprs)
        return Expression(f"d/d{symbol}({self.text})", exprs, self.dim)

    def evaluate(self, t: Any, coords: Sequence[Any]) -> FloatArray:
        with np.errstate(all="ignore"):
            values = [f(t, *coords[: self.dim]) for f in self._funcs]
        return _broadcast(values, t, coords[: self.dim])



def _second(u: Expression, a: sp.Symbol, b: sp.Symbol) -> Expression:
    return Expression(u.text, tuple(sp.diff(e, a, b) for e in u.exprs), u.dim)


@dataclass(frozen=True)
class ManufacturedForcing(ClosedForm):
    """f = u*_t - div A(grad u*) assembled from the analytic derivatives of u*.

    div A(grad u)_c = a(r) lap u_c + (a'(r)/r) sum_i (sum_{d,k} d_k u_d d_ik u_d) d_i u_c,
    with the second term taken as zero where grad u* vanishes.
    """

    model: GrowthModel
    solution: Expression
    _parts: dict[str, Any] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self) -> None:
        with np.errstate(all="ignore"):
            a0 = self.model.coefficient(np.zeros(1))
        if not np.all(np.isfinite(a0)):
            # a(r) blows up as r -> 0, so f is unbounded near critical points of u*
            raise DescriptorError(
                f"manufactured forcing for {self.model.label} is singular where "
                "grad u* vanishes; use mu > 0"
            )
        u = self.solution
        space = _SPACE[: u.dim]
        parts = {
            "u_t": u.diff(T),
            "grad": [u.diff(s) for s in space],
            "hess": [[_second(u, a, b) for b in space] for a in space],
        }
        object.__setattr__(self, "_parts", parts)

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.solution.dim

    @property
    def components(self) -> int:  # type: ignore[override]
        return self.solution.components

    def evaluate(self, t: Any, coords: Sequence[Any]) -> FloatArray:
        n = self.dim
        u_t = self._parts["u_t"].evaluate(t, coords)
        grad = np.stack([g.evaluate(t, coords) for g in self._parts["grad"]], axis=-1)
        rows = [
            np.stack([h.evaluate(t, coords) for h in row], axis=-1)
            for row in self._parts["hess"]
        ]
        hess = np.stack(rows, axis=-2)
        r = np.sqrt(np.sum(grad * grad, axis=(-2, -1)))
        laplace = sum(hess[..., i, i] for i in range(n))
        # d_i r * r = sum_{d,k} d_k u_d d_ik u_d
        r_dr = np.einsum("...dk,...dik->...i", grad, hess)
        with np.errstate(all="ignore"):
            a = self.model.coefficient(r)
            slope = np.where(r > 0.0, self.model.coefficient_slope(r), 0.0)
            drift = np.einsum("...i,...ci->...c", r_dr, grad)
            div = a[..., None] * laplace + slope[..., None] * drift
            out = u_t - div
        if not np.all(np.isfinite(out)):
            raise DescriptorError(
                f"manufactured forcing is not finite at t={float(np.max(t)):.6g}"
            )
        return out


def manufactured_forcing(
    model: GrowthModel, u_star: Expression | str, dim: int = 1
) -> ManufacturedForcing:
    """Forcing that makes ``u_star`` the exact solution of u_t - div A(Du) = f.

    Args:
        model: Growth model of the equation.
        u_star: Target solution, parsed with ``dim`` space variables when a string.
        dim: Space dimension.

    Raises:
        DescriptorError: The coefficient is singular at zero gradient (p < 2 with
            mu = 0), so f would be unbounded.
    """
    solution = Expression.parse(u_star, dim) if isinstance(u_star, str) else u_star
    return ManufacturedForcing(model, solution)
