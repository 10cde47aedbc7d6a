"""Experiment configuration files.

A config is a sequence of ``[section]`` headers followed by ``key = value`` lines;
``#`` starts a comment anywhere, ``;`` only at the start of a line (it also
separates the components of a vector descriptor). Every section has a schema that
types its keys and fills defaults; anything unknown is rejected with the offending line
number.
"""

import hashlib
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, TypeVar

from .errors import ConfigError, LabError
from .expressions import Expression, manufactured_forcing
from .grids import SpaceTimeGrid
from .nikolskij import RegularityConfig
from .orlicz import GrowthModel
from .solver import ProblemSpec, SolverConfig

__all__ = [
    "ChecksConfig",
    "ExperimentConfig",
    "Key",
    "SCHEMA",
    "load_config",
    "parse_config",
]

_REQUIRED = object()

T = TypeVar("T")


def _int_tuple(text: str) -> tuple[int, ...]:
    parts = [p.strip() for p in text.split(",")]
    if not parts or not all(parts):
        raise ValueError("expected a comma separated list of integers")
    return tuple(int(p) for p in parts)


def _optional_float(text: str) -> float | None:
    return None if text.lower() in ("", "none") else float(text)


def _optional_int(text: str) -> int | None:
    return None if text.lower() in ("", "none") else int(text)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any = _REQUIRED
    choices: tuple[str, ...] = ()

    @property
    def required(self) -> bool:
        return self.default is _REQUIRED


SCHEMA: dict[str, dict[str, Key]] = {
    "model": {
        "variant": Key(str, "p_growth", ("p_growth", "orlicz")),
        "p": Key(float),
        "mu": Key(float, 0.0),
        "kind": Key(str, "power", ("power", "max_power", "carreau")),
        "scale": Key(float, 1.0),
        "q_exp": Key(float, 2.0),
        "nu": Key(float, 1.0),
        "nu_inf": Key(float, 0.0),
        "carreau_mu": Key(float, 0.0),
    },
    "problem": {
        "nx": Key(_int_tuple),
        "length": Key(float, 1.0),
        "nt": Key(int),
        "t_final": Key(float),
        "boundary": Key(str, "periodic", ("periodic", "dirichlet")),
        "components": Key(int, 1),
        "u0": Key(str, ""),
        "forcing": Key(str, ""),
        "exact": Key(str, ""),
        "manufactured": Key(str, ""),
        "error_budget": Key(_optional_float, None),
        "min_order": Key(_optional_float, None),
    },
    "solver": {
        "newton_tol": Key(float, 1e-10),
        "newton_max_iter": Key(int, 50),
        "jacobian_regularization": Key(float, 1e-12),
        "damping": Key(float, 0.5),
        "line_search_max": Key(int, 30),
        "galerkin_modes": Key(int, 16),
        "galerkin_rtol": Key(float, 1e-8),
        "galerkin_atol": Key(float, 1e-10),
        "quadrature_points": Key(int, 8),
        "compare_tolerance": Key(float, 1e-3),
    },
    "regularity": {
        "trim": Key(_optional_float, None),
        "q": Key(float, 2.0),
        "rungs": Key(int, 6),
        "fit_min": Key(int, 1),
        "fit_max": Key(_optional_int, None),
        "slack": Key(float, 0.05),
        "saturation": Key(float, 0.95),
        "diening_H": Key(_optional_float, None),
        "diening_slack": Key(float, 0.05),
    },
    "checks": {
        "samples": Key(int, 10_000),
        "gradient_points": Key(int, 1_000),
        "equiv_points": Key(int, 200),
    },
}


@dataclass(frozen=True)
class ChecksConfig:
    samples: int = 10_000
    gradient_points: int = 1_000
    equiv_points: int = 200


@dataclass
class ExperimentConfig:
    """Parsed config: typed values plus the line each key (and section) came from."""

    text: str = ""
    sections: dict[str, dict[str, Any]] = field(default_factory=dict)
    lines: dict[tuple[str, str], int] = field(default_factory=dict)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()

    def has(self, name: str) -> bool:
        return name in self.sections

    def line_of(self, section: str, key: str = "") -> int | None:
        return self.lines.get((section, key)) or self.lines.get((section, ""))

    def require(self, *names: str) -> None:
        missing = [n for n in names if n not in self.sections]
        if missing:
            raise ConfigError(f"missing section(s): {', '.join(f'[{m}]' for m in missing)}")

    def section(self, name: str) -> dict[str, Any]:
        """Values of a section with schema defaults applied."""
        values = {k: key.default for k, key in SCHEMA[name].items() if not key.required}
        values.update(self.sections.get(name, {}))
        return values

    def fingerprint(self, names: Iterable[str]) -> str:
        """Stable hash of the typed values of the given sections."""
        digest = hashlib.sha256()
        for name in names:
            for key, value in sorted(self.section(name).items()):
                digest.update(f"{name}.{key}={value!r}\n".encode())
        return digest.hexdigest()

    def _guard(self, section: str, key: str, build: Callable[[], T]) -> T:
        try:
            return build()
        except ConfigError:
            raise
        except LabError as exc:
            raise ConfigError(str(exc), self.line_of(section, key)) from exc

    def model(self) -> GrowthModel:
        self.require("model")
        return self._guard("model", "", lambda: GrowthModel.from_section(self.section("model")))

    def solver(self) -> SolverConfig:
        values = self.section("solver")
        return self._guard("solver", "", lambda: SolverConfig(**values))

    def regularity(self) -> RegularityConfig:
        values = self.section("regularity")
        return self._guard("regularity", "", lambda: RegularityConfig(**values))

    def checks(self) -> ChecksConfig:
        values = self.section("checks")
        for key, value in values.items():
            if value < 1:
                raise ConfigError(f"{key} must be positive", self.line_of("checks", key))
        return ChecksConfig(**values)

    def grid(self) -> SpaceTimeGrid:
        self.require("problem")
        p = self.section("problem")
        if len(p["nx"]) not in (1, 2) or min(p["nx"]) < 4:
            raise ConfigError(
                "nx needs one or two counts, each at least 4", self.line_of("problem", "nx")
            )
        if p["nt"] < 4:
            raise ConfigError("nt must be at least 4", self.line_of("problem", "nt"))
        for key in ("length", "t_final"):
            if not p[key] > 0.0:
                raise ConfigError(f"{key} must be positive", self.line_of("problem", key))
        return self._guard(
            "problem",
            "",
            lambda: SpaceTimeGrid.uniform(
                p["nx"], p["length"], p["nt"], p["t_final"], p["boundary"], p["components"]
            ),
        )

    def problem(self) -> ProblemSpec:
        """Scenario from [model] + [problem]; ``manufactured`` replaces u0/forcing/exact."""
        model = self.model()
        grid = self.grid()
        p = self.section("problem")
        dim = grid.dim

        def expr(key: str) -> Expression | None:
            text = p[key].strip()
            if not text:
                return None
            return self._guard("problem", key, lambda: Expression.parse(text, dim))

        if p["manufactured"].strip():
            clash = [k for k in ("u0", "forcing", "exact") if p[k].strip()]
            if clash:
                raise ConfigError(
                    f"manufactured excludes {', '.join(clash)}",
                    self.line_of("problem", clash[0]),
                )
            u_star = expr("manufactured")
            assert u_star is not None
            forcing = self._guard(
                "problem", "manufactured", lambda: manufactured_forcing(model, u_star)
            )
            return self._guard(
                "problem",
                "manufactured",
                lambda: ProblemSpec(model, grid, u_star, forcing, u_star, "manufactured"),
            )
        u0 = expr("u0")
        if u0 is None:
            raise ConfigError("[problem] needs u0 or manufactured", self.line_of("problem"))
        return self._guard(
            "problem",
            "u0",
            lambda: ProblemSpec(model, grid, u0, expr("forcing"), expr("exact"), "problem"),
        )


def parse_config(text: str) -> ExperimentConfig:
    """Parse INI-style config text against SCHEMA.

    Lines may carry ``#`` comments; lines starting with ``;`` are skipped.

    Args:
        text: Whole config file.

    Returns:
        Raw typed sections with the line number of every key. Cross-field
        validation happens when a section is turned into its object.

    Raises:
        ConfigError: Unknown, duplicate or malformed entries, with the line number.
    """
    cfg = ExperimentConfig(text=text)
    current: str | None = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", number)
            current = line[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"unknown section [{current}]", number)
            if current in cfg.sections:
                raise ConfigError(f"duplicate section [{current}]", number)
            cfg.sections[current] = {}
            cfg.lines[(current, "")] = number
            continue
        if current is None:
            raise ConfigError("key outside of any section", number)
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", number)
        spec = SCHEMA[current].get(key)
        if spec is None:
            raise ConfigError(f"unknown key {key!r} in [{current}]", number)
        if key in cfg.sections[current]:
            raise ConfigError(f"duplicate key {key!r} in [{current}]", number)
        try:
            parsed = spec.parse(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", number) from exc
        if spec.choices and parsed not in spec.choices:
            raise ConfigError(
                f"{key} must be one of {', '.join(spec.choices)}, got {parsed!r}", number
            )
        cfg.sections[current][key] = parsed
        cfg.lines[(current, key)] = number
    for name, values in cfg.sections.items():
        for key, spec in SCHEMA[name].items():
            if spec.required and key not in values:
                raise ConfigError(
                    f"[{name}] is missing required key {key!r}", cfg.lines[(name, "")]
                )
    return cfg


def load_config(path: Path) -> ExperimentConfig:
    """Read ``path`` as UTF-8 and parse it."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text)
