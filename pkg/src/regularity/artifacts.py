"""Run outputs: atomic CSV/JSON/binary writers, the run manifest and the trajectory cache."""

import csv
import io
import json
import logging
import os
import platform
import tempfile
from collections.abc import Iterable, Sequence
from importlib import metadata
from pathlib import Path
from typing import Any

import diskcache
from tenacity import (
    retry,
    retry_if_exception_type,
    stop_after_attempt,
    wait_random_exponential,
)

from .checks import CheckRow
from .energy import EnergyReport
from .galerkin import SolverComparison
from .grids import Field
from .nikolskij import EmbeddingRow, Prediction, RegularityExperiment
from .serialization import field_from_bytes, field_to_bytes, field_to_csv
from .solver import ConvergenceStudy, NewtonStats, Trajectory

__all__ = [
    "atomic_write",
    "csv_text",
    "write_csv",
    "write_json",
    "write_manifest",
    "TrajectoryCache",
    "check_rows",
    "newton_rows",
    "energy_rows",
    "curve_rows",
    "summary_rows",
    "diening_rows",
    "prediction_rows",
    "comparison_rows",
    "order_rows",
    "write_trajectory",
]

logger = logging.getLogger(__name__)

PACKAGES = ("click", "diskcache", "numpy", "scipy", "sympy", "tenacity")


@retry(
    retry=retry_if_exception_type(OSError),
    stop=stop_after_attempt(5),
    wait=wait_random_exponential(min=0.05, max=1),
    reraise=True,
)
def atomic_write(path: Path, data: bytes | str) -> Path:
    """Write to a temp file next to ``path`` and move it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Render rows as CSV text.

    Args:
        header: Column names.
        rows: Row tuples; None becomes an empty cell and floats use repr.

    Returns:
        The CSV document with Unix line endings.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Atomically write ``csv_text(header, rows)`` to ``path``."""
    return atomic_write(path, csv_text(header, rows))


def write_json(path: Path, payload: Any) -> Path:
    """Atomically write indented JSON with sorted keys."""
    return atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _versions() -> dict[str, str]:
    out = {"python": platform.python_version()}
    for name in PACKAGES:
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = "unknown"
    try:
        out["parabolic-regularity-lab"] = metadata.version("parabolic-regularity-lab")
    except metadata.PackageNotFoundError:
        out["parabolic-regularity-lab"] = "unknown"
    return out


def write_manifest(
    out: Path, config_sha256: str, seed: int, threads: int, subcommand: str
) -> Path:
    """Record what produced the files in ``out``.

    Args:
        out: Output directory.
        config_sha256: Digest of the raw config file.
        seed: Global seed of the run.
        threads: Worker thread count of the run.
        subcommand: CLI subcommand name.

    Returns:
        Path of the written manifest.json.
    """
    return write_json(
        out / "manifest.json",
        {
            "subcommand": subcommand,
            "config_sha256": config_sha256,
            "seed": seed,
            "threads": threads,
            "versions": _versions(),
        },
    )


class TrajectoryCache:
    """Solved trajectories keyed by the fingerprint of [model]+[problem]+[solver].

    Each entry holds the binary field and the Newton log rows, so a cache hit
    reproduces every artifact of the original solve.
    """

    def __init__(self, out: Path) -> None:
        self.directory = out / ".cache"

    def get(self, key: str) -> Trajectory | None:
        """Look up a solved trajectory.

        Args:
            key: Fingerprint of the sections that determine the solve.

        Returns:
            The field with its Newton log, or None on a miss.
        """
        with diskcache.Cache(str(self.directory)) as cache:
            entry = cache.get(key)
        if entry is None:
            return None
        logger.debug("trajectory cache hit %s", key[:12])
        data, rows = entry
        log = tuple(NewtonStats(*row) for row in rows)
        return Trajectory(field_from_bytes(data), log)

    def put(self, key: str, trajectory: Trajectory) -> None:
        """Store the field and the Newton log under ``key``."""
        entry = (field_to_bytes(trajectory.field), newton_rows(trajectory.newton_log))
        with diskcache.Cache(str(self.directory)) as cache:
            cache.set(key, entry)


def write_trajectory(out: Path, field: Field) -> None:
    """Write trajectory.bin and trajectory.csv."""
    atomic_write(out / "trajectory.bin", field_to_bytes(field))
    atomic_write(out / "trajectory.csv", field_to_csv(field))


CHECK_HEADER = ("check", "samples", "min_ratio", "max_ratio", "verdict")


def check_rows(rows: Sequence[CheckRow]) -> list[tuple[Any, ...]]:
    return [(r.check, r.samples, r.min_ratio, r.max_ratio, r.verdict) for r in rows]


NEWTON_HEADER = ("step", "iterations", "final_residual", "damped_steps")


def newton_rows(log: Sequence[NewtonStats]) -> list[tuple[Any, ...]]:
    return [(s.step, s.iterations, s.final_residual, s.damped_steps) for s in log]


ENERGY_HEADER = ("quantity", "value")


def energy_rows(report: EnergyReport) -> list[tuple[Any, ...]]:
    return list(report.rows())


CURVE_HEADER = ("direction", "q", "h", "norm")


def curve_rows(experiment: RegularityExperiment) -> list[tuple[Any, ...]]:
    return [
        (curve.label, curve.q, float(h), float(v))
        for curve in experiment.curves
        for h, v in zip(curve.steps, curve.norms)
    ]


SUMMARY_HEADER = (
    "direction",
    "q",
    "alpha_hat",
    "r2",
    "h_min",
    "h_max",
    "seminorm",
    "predicted",
    "refined_prediction",
    "margin",
    "verdict",
)


def summary_rows(experiment: RegularityExperiment) -> list[tuple[Any, ...]]:
    return [
        (
            r.direction,
            r.q,
            r.alpha_hat,
            r.r2,
            r.h_min,
            r.h_max,
            r.seminorm,
            r.predicted,
            r.refined_prediction,
            r.margin,
            r.verdict,
        )
        for r in experiment.reports
    ]


DIENING_HEADER = ("alpha", "H", "k_avg", "k_plain", "factor", "proven_factor", "passed")


def diening_rows(experiment: RegularityExperiment) -> list[tuple[Any, ...]]:
    """Empty when the experiment skipped the averaged check."""
    d = experiment.diening
    if d is None:
        return []
    return [(d.alpha, d.H, d.k_avg, d.k_plain, d.factor, d.proven_factor, d.passed)]


PREDICTION_HEADER = ("setting", "n", "alpha", "q", "value", "applies", "reason")


def prediction_rows(
    predictions: Sequence[Prediction], n: int, embeddings: Sequence[EmbeddingRow]
) -> list[tuple[Any, ...]]:
    """Predicted exponents followed by the embedding table.

    Args:
        predictions: One entry per setting.
        n: Space dimension of the run.
        embeddings: Rows of the embedding table.

    Returns:
        Rows for PREDICTION_HEADER; embedding rows are labelled ``embedding_<label>``.
    """
    rows: list[tuple[Any, ...]] = [
        (p.setting, n, None, None, p.beta, p.applies, p.reason) for p in predictions
    ]
    rows += [
        (f"embedding_{e.label}", e.n, e.alpha, e.q, e.exponent, True, "")
        for e in embeddings
    ]
    return rows


COMPARISON_HEADER = ("discrepancy", "relative", "tolerance", "passed")


def comparison_rows(result: SolverComparison) -> list[tuple[Any, ...]]:
    return [(result.discrepancy, result.relative, result.tolerance, result.passed)]


ORDER_HEADER = ("dx", "error")


def order_rows(study: ConvergenceStudy) -> list[tuple[Any, ...]]:
    return list(zip(study.spacings, study.errors))
