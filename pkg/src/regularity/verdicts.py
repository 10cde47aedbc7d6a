from typing import Any

__all__ = ["VERDICT_ORDER", "aggregate_check_rows"]

VERDICT_ORDER: dict[str, int] = {
    "fail": 0,
    "saturated": 1,
    "n/a": 2,
    "pass": 3,
}

_PASSING = {"pass", "saturated", "n/a"}


def _margin(row: dict[str, Any]) -> float | None:
    """Return the numeric margin of a row, or None when it has none.

    Args:
        row: A result row, optionally carrying a "margin" entry.

    Returns:
        The margin as a float, or None if missing or not a finite number.
    """
    value = row.get("margin")
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if value == value and abs(value) != float("inf"):
            return float(value)
    return None


def _get_margin_ascending(kv: tuple[str, float]) -> float:
    """Helper key function to sort rows by margin in ascending order."""
    return kv[1]


def _get_rank(row: dict[str, Any]) -> tuple[int, str]:
    """Helper key function ordering rows by verdict severity, then by name."""
    return VERDICT_ORDER.get(str(row.get("verdict")), 0), str(row.get("check", ""))


def aggregate_check_rows(rows: list[dict[str, Any]]) -> dict[str, Any]:
    """Aggregates per-check result rows into one run verdict.

    Args:
        rows: A list of result rows. Each item must contain "check" (str name) and
            "verdict" (one of "pass", "fail", "saturated", "n/a"), and may carry a
            numeric "margin" (measured minus predicted).

    Returns:
        A summary dictionary with the overall verdict, counts per verdict, the failing
        checks, the worst (smallest) margins and the checks ordered by severity.
        Unknown verdicts count as failures.
    """
    counts: dict[str, int] = {k: 0 for k in VERDICT_ORDER}
    failed: list[str] = []
    margins: list[tuple[str, float]] = []

    for row in rows:
        name = str(row.get("check", ""))
        verdict = row.get("verdict")
        if verdict not in VERDICT_ORDER:
            verdict = "fail"
        counts[str(verdict)] += 1
        if verdict not in _PASSING:
            failed.append(name)
        m = _margin(row)
        if m is not None:
            margins.append((name, m))

    worst: list[tuple[str, float]] = sorted(margins, key=_get_margin_ascending)[:3]
    ordered = [str(r.get("check", "")) for r in sorted(rows, key=_get_rank)]
    overall = "fail" if failed or not rows else "pass"

    return {
        "verdict": overall,
        "checks": len(rows),
        "counts": counts,
        "failed": sorted(set(failed)),
        "worst_margins": [(k, round(v, 4)) for k, v in worst],
        "by_severity": ordered,
    }
