"""Numerical lab for degenerate parabolic p-Laplace and Orlicz systems."""

from .errors import (
    ConfigError,
    DegenerateInputError,
    DescriptorError,
    InputError,
    LabError,
    NewtonConvergenceError,
    NumericError,
    RangeError,
    SolverError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateInputError",
    "DescriptorError",
    "InputError",
    "LabError",
    "NewtonConvergenceError",
    "NumericError",
    "RangeError",
    "SolverError",
    "__version__",
]
