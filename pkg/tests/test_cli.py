import hashlib
import json

import pytest
from click.testing import CliRunner

main = pytest.importorskip("src.main")
cli = main.cli

from src.regularity.serialization import read_field  # noqa: E402

HEAT = """\
[model]
p = 2

[problem]
nx = 16
nt = 8
t_final = 0.1
u0 = sin(2*pi*x)
exact = exp(-4*pi**2*t)*sin(2*pi*x)
error_budget = {budget}
"""

CHECKS = """\
[model]
p = 2
[checks]
samples = 200
gradient_points = 50
equiv_points = 10
"""


def _summary(output: str) -> dict:
    """First JSON object in the mixed stdout/stderr stream."""
    start = output.index("{")
    obj, _ = json.JSONDecoder().raw_decode(output[start:])
    return obj


def _run(tmp_path, command: str, text: str, *extra: str):
    config = tmp_path / "run.cfg"
    config.write_text(text, encoding="utf-8")
    out = tmp_path / "out"
    args = [command, "--config", str(config), "--out", str(out), *extra]
    return CliRunner().invoke(cli, args), out


def test_check_assumptions_writes_rows_and_manifest(tmp_path):
    result, out = _run(tmp_path, "check-assumptions", CHECKS, "--seed", "7", "--threads", "2")
    assert result.exit_code == 0, result.output
    summary = _summary(result.output)
    assert summary["status"] == "ok" and summary["verdict"] == "pass"
    assert summary["checks"] == 11
    lines = (out / "checks.csv").read_text().splitlines()
    assert lines[0] == "check,samples,min_ratio,max_ratio,verdict"
    assert len(lines) == 12
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["threads"] == 2
    assert manifest["subcommand"] == "check-assumptions"
    expected = hashlib.sha256(CHECKS.encode("utf-8")).hexdigest()
    assert manifest["config_sha256"] == expected


def test_check_assumptions_output_is_seed_stable(tmp_path):
    first, out = _run(tmp_path, "check-assumptions", CHECKS, "--seed", "3")
    rows = (out / "checks.csv").read_text()
    second, _ = _run(tmp_path, "check-assumptions", CHECKS, "--seed", "3", "--threads", "4")
    assert first.exit_code == second.exit_code == 0
    assert (out / "checks.csv").read_text() == rows


def test_malformed_config_exits_with_code_two(tmp_path):
    result, out = _run(tmp_path, "check-assumptions", CHECKS + "colour = red\n")
    assert result.exit_code == 2
    summary = _summary(result.output)
    assert summary["status"] == "error" and summary["reason"] == "config"
    assert "line 7" in summary["message"]
    assert not (out / "manifest.json").exists()


def test_missing_model_section_is_a_config_error(tmp_path):
    result, _ = _run(tmp_path, "solve", "[problem]\nnx = 8\nnt = 8\nt_final = 1\nu0 = x\n")
    assert result.exit_code == 2


def test_solve_writes_artifacts_and_reuses_the_cache(tmp_path):
    result, out = _run(tmp_path, "solve", HEAT.format(budget="1.0"))
    assert result.exit_code == 0, result.output
    summary = _summary(result.output)
    assert summary["verdict"] == "pass"
    assert summary["l2_error"] < 1.0
    assert summary["newton_max_iterations"] >= 1
    assert set(summary["energy_constants"]) == {"time_first", "time_second", "space"}
    field = read_field(out / "trajectory.bin")
    assert field.values.shape == (9, 16, 1)
    assert (out / "trajectory.csv").read_text().startswith("t,x1,component,value")
    newton_log = (out / "newton_log.csv").read_text()
    assert len(newton_log.splitlines()) == 9
    assert (out / "energy.csv").exists()

    again, _ = _run(tmp_path, "solve", HEAT.format(budget="1.0"))
    assert again.exit_code == 0
    assert "Reusing cached trajectory" in again.output
    # a cache hit restores the Newton log along with the field
    rerun = _summary(again.output)
    assert rerun["newton_max_iterations"] == summary["newton_max_iterations"]
    assert (out / "newton_log.csv").read_text() == newton_log


def test_solve_fails_acceptance_when_over_budget(tmp_path):
    result, out = _run(tmp_path, "solve", HEAT.format(budget="1e-12"))
    assert result.exit_code == 3
    summary = _summary(result.output)
    assert summary["verdict"] == "fail"
    assert "exceeds budget" in summary["violations"][0]
    assert (out / "manifest.json").exists()


def test_regularity_command(tmp_path):
    text = HEAT.format(budget="none").replace("nx = 16", "nx = 32")
    text = text.replace("nt = 8", "nt = 64").replace("t_final = 0.1", "t_final = 0.25")
    result, out = _run(tmp_path, "regularity", text, "--threads", "2")
    assert result.exit_code in (0, 3), result.output
    summary = _summary(result.output)
    assert {"space_x1", "time"} <= set(summary["exponents"])
    assert summary["verdict"] == ("pass" if result.exit_code == 0 else "fail")
    for name in ("curves.csv", "regularity_summary.csv", "diening.csv", "predictions.csv"):
        assert (out / name).exists(), name
    header = (out / "regularity_summary.csv").read_text().splitlines()[0]
    assert header.endswith("margin,verdict")
    predictions = (out / "predictions.csv").read_text()
    assert "embedding_space_time" in predictions


@pytest.mark.parametrize(("tolerance", "code"), [("1.0", 0), ("1e-9", 3)])
def test_galerkin_compare(tmp_path, tolerance, code):
    text = (
        HEAT.format(budget="none").replace("nx = 16", "nx = 32").replace("nt = 8", "nt = 40")
        + f"[solver]\ngalerkin_modes = 8\ncompare_tolerance = {tolerance}\n"
    )
    result, out = _run(tmp_path, "galerkin-compare", text)
    assert result.exit_code == code, result.output
    summary = _summary(result.output)
    assert summary["tolerance"] == float(tolerance)
    lines = (out / "comparison.csv").read_text().splitlines()
    assert lines[0] == "discrepancy,relative,tolerance,passed"
