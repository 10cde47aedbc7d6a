from typing import Any

__all__ = [
    "LabError",
    "InputError",
    "DegenerateInputError",
    "RangeError",
    "NumericError",
    "DescriptorError",
    "SolverError",
    "NewtonConvergenceError",
    "ConfigError",
]


class LabError(Exception):
    """Base class for every error raised by the regularity lab."""


class InputError(LabError, ValueError):
    """Invalid or non-finite input, or an invalid model description."""


class DegenerateInputError(InputError):
    """Input for which a ratio is undefined, e.g. Q == P."""


class RangeError(LabError, IndexError):
    """A shift, window or ladder does not fit the grid."""


class NumericError(LabError, ArithmeticError):
    """Quadrature or root finding failed to reach its tolerance."""

    def __init__(self, message: str, **diagnostics: Any) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        extra = ", ".join(f"{k}={v!r}" for k, v in sorted(self.diagnostics.items()))
        return f"{base} ({extra})"


class DescriptorError(InputError):
    """Closed-form expression outside the supported grammar."""


class SolverError(LabError, RuntimeError):
    """A time step or an ODE integration failed."""

    def __init__(
        self, message: str, step: int | None = None, time: float | None = None
    ) -> None:
        super().__init__(message)
        self.step = step
        self.time = time

    def __str__(self) -> str:
        base = super().__str__()
        where = []
        if self.step is not None:
            where.append(f"step {self.step}")
        if self.time is not None:
            where.append(f"t={self.time:.6g}")
        return f"{base} at {', '.join(where)}" if where else base


class NewtonConvergenceError(SolverError):
    """Newton did not reach the residual tolerance within the iteration budget."""

    def __init__(
        self,
        message: str,
        residual: float,
        iterations: int,
        iterate: Any = None,
        step: int | None = None,
        time: float | None = None,
    ) -> None:
        super().__init__(message, step=step, time=time)
        self.residual = residual
        self.iterations = iterations
        self.iterate = iterate


class ConfigError(LabError):
    """Malformed experiment config; ``line`` points at the offending line."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
