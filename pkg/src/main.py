import functools
import json
import logging
import math
import pathlib
import sys
import time
from collections.abc import Callable
from typing import Any, NoReturn

import click

ROOT = pathlib.Path(__file__).resolve().parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from regularity import artifacts  # noqa: E402
from regularity.checks import run_assumption_checks  # noqa: E402
from regularity.config import ExperimentConfig, load_config  # noqa: E402
from regularity.energy import energy_report  # noqa: E402
from regularity.errors import ConfigError, LabError  # noqa: E402
from regularity.galerkin import compare_solvers  # noqa: E402
from regularity.nikolskij import (  # noqa: E402
    embedding_table,
    predict_beta,
    ut_regularity_experiment,
)
from regularity.solver import (  # noqa: E402
    ProblemSpec,
    SolverConfig,
    Trajectory,
    convergence_study,
    l2_error,
    solve,
)
from regularity.verdicts import aggregate_check_rows  # noqa: E402

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_ACCEPTANCE = 3

_SOLVE_SECTIONS = ("model", "problem", "solver")


def _debug(message: str) -> None:
    click.secho(f"      DEBUG: {message}", fg="yellow", dim=True, err=True)


def _phase(message: str) -> None:
    click.secho(message, fg="cyan", err=True)


def _fail(subcommand: str, reason: str, message: str, code: int) -> NoReturn:
    """Report a failure on both streams and exit.

    Args:
        subcommand: Name echoed in the JSON error object.
        reason: Short machine-readable cause (config, solver, regularity, ...).
        message: Human-readable detail.
        code: Process exit code.
    """
    click.secho(f"Error: {message}", fg="red", err=True)
    click.echo(
        json.dumps(
            {"status": "error", "subcommand": subcommand, "reason": reason, "message": message}
        )
    )
    raise SystemExit(code)


def _timings(phases: dict[str, float]) -> None:
    """Performance summary on stderr so stdout stays pure JSON."""
    click.secho("\n" + "=" * 40, fg="yellow", err=True)
    click.secho("Performance Summary", bold=True, err=True)
    click.secho("-" * 40, fg="yellow", err=True)
    for name, seconds in phases.items():
        click.echo(f"  {name + ':':<14}{seconds:>8.2f}s", err=True)
    click.echo(f"  {'Total:':<14}{sum(phases.values()):>8.2f}s", err=True)
    click.secho("=" * 40 + "\n", fg="yellow", err=True)


def _finite(value: Any) -> Any:
    """JSON-safe value: non-finite floats become null."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def common_options(func: Callable[..., None]) -> Callable[..., None]:
    """Attach the options every subcommand shares.

    Args:
        func: The click command callback.

    Returns:
        The callback wrapped with --config, --out, --seed and --threads.
    """
    @click.option(
        "--config",
        "config_path",
        required=True,
        type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path),
        help="Experiment config file.",
    )
    @click.option(
        "--out",
        required=True,
        type=click.Path(file_okay=False, path_type=pathlib.Path),
        help="Output directory for CSVs, artifacts and the manifest.",
    )
    @click.option("--seed", default=0, type=click.IntRange(0, 2**64 - 1), help="Global seed.")
    @click.option("--threads", default=1, type=click.IntRange(1), help="Worker threads.")
    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        func(*args, **kwargs)

    return wrapper


def _load(subcommand: str, path: pathlib.Path) -> ExperimentConfig:
    """Parse the config file or exit with the config error code.

    Args:
        subcommand: Name used in the error report.
        path: Config file given by --config.

    Returns:
        The parsed config.
    """
    try:
        return load_config(path)
    except ConfigError as exc:
        _fail(subcommand, "config", str(exc), EXIT_CONFIG)


def _trajectory(
    cfg: ExperimentConfig,
    spec: ProblemSpec,
    solver_cfg: SolverConfig,
    out: pathlib.Path,
) -> Trajectory:
    """Reuse a cached trajectory for the same model, problem and solver settings.

    Args:
        cfg: Parsed config; its [model], [problem] and [solver] sections form the key.
        spec: Scenario to solve on a cache miss.
        solver_cfg: Newton settings for that solve.
        out: Output directory holding the ``.cache`` store.

    Returns:
        The trajectory with its Newton log, restored from the cache when possible.
    """
    cache = artifacts.TrajectoryCache(out)
    key = cfg.fingerprint(_SOLVE_SECTIONS)
    cached = cache.get(key)
    if cached is not None:
        _debug(f"Reusing cached trajectory {key[:12]}")
        return cached
    result = solve(spec, solver_cfg)
    cache.put(key, result)
    return result


@click.group()
@click.option("--verbose", is_flag=True, help="Log library debug output to stderr.")
def cli(verbose: bool) -> None:
    """Parabolic regularity lab: assumption checks, solvers and Nikolskij experiments."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command("check-assumptions")
@common_options
def check_assumptions(
    config_path: pathlib.Path, out: pathlib.Path, seed: int, threads: int
) -> None:
    """Run the sampled inequality suite for the [model] section."""
    name = "check-assumptions"
    phases: dict[str, float] = {}
    start = time.time()
    cfg = _load(name, config_path)
    try:
        model = cfg.model()
        checks_cfg = cfg.checks()
    except ConfigError as exc:
        _fail(name, "config", str(exc), EXIT_CONFIG)
    phases["Config"] = time.time() - start

    _phase(f"[1/1] Checking {model.label} on {checks_cfg.samples} samples...")
    start = time.time()
    try:
        rows = run_assumption_checks(model, checks_cfg, seed, threads)
    except LabError as exc:
        _fail(name, "runtime", str(exc), EXIT_RUNTIME)
    phases["Checks"] = time.time() - start

    artifacts.write_csv(out / "checks.csv", artifacts.CHECK_HEADER, artifacts.check_rows(rows))
    artifacts.write_manifest(out, cfg.sha256, seed, threads, name)
    agg = aggregate_check_rows([r.as_dict() for r in rows])
    click.echo(
        json.dumps(
            {"status": "ok", "subcommand": name, "model": model.label, **agg}, indent=2
        )
    )
    _timings(phases)
    if agg["verdict"] != "pass":
        raise SystemExit(EXIT_ACCEPTANCE)


@cli.command("solve")
@common_options
def solve_cmd(config_path: pathlib.Path, out: pathlib.Path, seed: int, threads: int) -> None:
    """Solve the [problem] scenario and write the trajectory with its diagnostics."""
    name = "solve"
    phases: dict[str, float] = {}
    start = time.time()
    cfg = _load(name, config_path)
    try:
        cfg.require(*_SOLVE_SECTIONS[:2])
        spec = cfg.problem()
        solver_cfg = cfg.solver()
        reg_cfg = cfg.regularity()
        problem = cfg.section("problem")
    except ConfigError as exc:
        _fail(name, "config", str(exc), EXIT_CONFIG)
    phases["Config"] = time.time() - start
    grid = spec.grid

    _phase(f"[1/3] Solving {spec.model.label} on nx={grid.nx}, nt={grid.nt}...")
    start = time.time()
    try:
        traj = _trajectory(cfg, spec, solver_cfg, out)
    except LabError as exc:
        _fail(name, "solver", str(exc), EXIT_RUNTIME)
    phases["Solve"] = time.time() - start
    field, log = traj.field, traj.newton_log

    _phase("[2/3] Energy diagnostics...")
    start = time.time()
    trim = reg_cfg.trim if reg_cfg.trim is not None else max(2 * grid.dt, grid.t_final / 8)
    try:
        report = energy_report(field, spec, trim)
    except LabError as exc:
        _fail(name, "diagnostics", str(exc), EXIT_RUNTIME)
    phases["Energy"] = time.time() - start

    summary: dict[str, Any] = {
        "status": "ok",
        "subcommand": name,
        "model": spec.model.label,
        "newton_max_iterations": max((s.iterations for s in log), default=0),
        "energy_constants": {p.name: _finite(p.constant) for p in report.pairs},
    }
    violations = []
    if not all(math.isfinite(v) for v in report.left_hand_sides()):
        violations.append("energy diagnostics are not finite")

    _phase("[3/3] Acceptance checks...")
    start = time.time()
    try:
        if spec.exact is not None:
            error = l2_error(field, spec.exact)
            summary["l2_error"] = error
            budget = problem["error_budget"]
            if budget is not None and error > budget:
                violations.append(f"L2 error {error:.3e} exceeds budget {budget:.3e}")
        if problem["min_order"] is not None:
            study = convergence_study(spec, solver_cfg)
            summary["observed_order"] = study.order
            artifacts.write_csv(
                out / "order.csv", artifacts.ORDER_HEADER, artifacts.order_rows(study)
            )
            if study.order < problem["min_order"]:
                violations.append(
                    f"observed order {study.order:.3f} below {problem['min_order']}"
                )
    except LabError as exc:
        _fail(name, "solver", str(exc), EXIT_RUNTIME)
    phases["Acceptance"] = time.time() - start

    artifacts.write_trajectory(out, field)
    artifacts.write_csv(
        out / "newton_log.csv", artifacts.NEWTON_HEADER, artifacts.newton_rows(log)
    )
    artifacts.write_csv(out / "energy.csv", artifacts.ENERGY_HEADER, artifacts.energy_rows(report))
    artifacts.write_manifest(out, cfg.sha256, seed, threads, name)
    summary["verdict"] = "fail" if violations else "pass"
    summary["violations"] = violations
    click.echo(json.dumps(summary, indent=2))
    _timings(phases)
    if violations:
        raise SystemExit(EXIT_ACCEPTANCE)


@cli.command("regularity")
@common_options
def regularity_cmd(
    config_path: pathlib.Path, out: pathlib.Path, seed: int, threads: int
) -> None:
    """Measure the fractional smoothness of u_t against the predicted exponents."""
    name = "regularity"
    phases: dict[str, float] = {}
    start = time.time()
    cfg = _load(name, config_path)
    try:
        cfg.require(*_SOLVE_SECTIONS[:2])
        spec = cfg.problem()
        solver_cfg = cfg.solver()
        reg_cfg = cfg.regularity()
    except ConfigError as exc:
        _fail(name, "config", str(exc), EXIT_CONFIG)
    phases["Config"] = time.time() - start

    _phase("[1/2] Obtaining trajectory...")
    start = time.time()
    try:
        field = _trajectory(cfg, spec, solver_cfg, out).field
    except LabError as exc:
        _fail(name, "solver", str(exc), EXIT_RUNTIME)
    phases["Trajectory"] = time.time() - start

    _phase(f"[2/2] Fitting exponents on {threads} thread(s)...")
    start = time.time()
    try:
        experiment = ut_regularity_experiment(field, spec, reg_cfg, threads)
    except LabError as exc:
        _fail(name, "regularity", str(exc), EXIT_RUNTIME)
    phases["Regularity"] = time.time() - start
    for note in experiment.notes:
        _debug(note)

    n, p = spec.grid.dim, spec.model.p
    predictions = [
        predict_beta(p, n, s)
        for s in ("time", "space_whole", "space_refined_case_a", "space_refined_case_b")
    ]
    artifacts.write_csv(
        out / "curves.csv", artifacts.CURVE_HEADER, artifacts.curve_rows(experiment)
    )
    artifacts.write_csv(
        out / "regularity_summary.csv",
        artifacts.SUMMARY_HEADER,
        artifacts.summary_rows(experiment),
    )
    artifacts.write_csv(
        out / "diening.csv", artifacts.DIENING_HEADER, artifacts.diening_rows(experiment)
    )
    artifacts.write_csv(
        out / "predictions.csv",
        artifacts.PREDICTION_HEADER,
        artifacts.prediction_rows(predictions, n, embedding_table(n)),
    )
    artifacts.write_manifest(out, cfg.sha256, seed, threads, name)

    rows: list[dict[str, Any]] = [
        {"check": r.direction, "verdict": r.verdict, "margin": r.margin}
        for r in experiment.reports
    ]
    if experiment.diening is not None:
        rows.append(
            {
                "check": "averaged_characterization",
                "verdict": "pass" if experiment.diening.passed else "fail",
            }
        )
    agg = aggregate_check_rows(rows)
    exponents = {r.direction: _finite(r.alpha_hat) for r in experiment.reports}
    click.echo(
        json.dumps(
            {"status": "ok", "subcommand": name, "exponents": exponents, **agg}, indent=2
        )
    )
    _timings(phases)
    if agg["verdict"] != "pass":
        raise SystemExit(EXIT_ACCEPTANCE)


@cli.command("galerkin-compare")
@common_options
def galerkin_compare(
    config_path: pathlib.Path, out: pathlib.Path, seed: int, threads: int
) -> None:
    """Cross-validate the finite-difference solver against the Galerkin solver."""
    name = "galerkin-compare"
    phases: dict[str, float] = {}
    start = time.time()
    cfg = _load(name, config_path)
    try:
        cfg.require(*_SOLVE_SECTIONS[:2])
        spec = cfg.problem()
        solver_cfg = cfg.solver()
    except ConfigError as exc:
        _fail(name, "config", str(exc), EXIT_CONFIG)
    phases["Config"] = time.time() - start

    _phase(f"[1/1] Comparing solvers with {solver_cfg.galerkin_modes} modes...")
    start = time.time()
    try:
        result = compare_solvers(spec, solver_cfg)
    except LabError as exc:
        _fail(name, "solver", str(exc), EXIT_RUNTIME)
    phases["Compare"] = time.time() - start

    artifacts.write_csv(
        out / "comparison.csv", artifacts.COMPARISON_HEADER, artifacts.comparison_rows(result)
    )
    artifacts.write_manifest(out, cfg.sha256, seed, threads, name)
    click.echo(
        json.dumps(
            {
                "status": "ok",
                "subcommand": name,
                "discrepancy": result.discrepancy,
                "relative": result.relative,
                "tolerance": result.tolerance,
                "verdict": "pass" if result.passed else "fail",
            },
            indent=2,
        )
    )
    _timings(phases)
    if not result.passed:
        raise SystemExit(EXIT_ACCEPTANCE)


if __name__ == "__main__":
    cli()
