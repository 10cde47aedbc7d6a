from src.regularity.verdicts import aggregate_check_rows


def test_worst_margins_ordering_with_ties():
    rows = [
        {"check": "time", "verdict": "pass", "margin": 0.3},
        {"check": "space_x1", "verdict": "pass", "margin": 0.01},
        {"check": "space_x2", "verdict": "pass", "margin": 0.01},
        {"check": "diagonal_x1", "verdict": "fail", "margin": -0.07},
        {"check": "diagonal_x2", "verdict": "pass", "margin": 0.2},
    ]
    agg = aggregate_check_rows(rows)

    worst = [name for name, _ in agg["worst_margins"]]
    assert worst[0] == "diagonal_x1"
    assert set(worst[1:]) == {"space_x1", "space_x2"}
    assert agg["worst_margins"][0] == ("diagonal_x1", -0.07)


def test_margins_are_rounded_and_non_numbers_skipped():
    rows = [
        {"check": "a", "verdict": "pass", "margin": 0.123456},
        {"check": "b", "verdict": "pass", "margin": float("nan")},
        {"check": "c", "verdict": "pass", "margin": None},
        {"check": "d", "verdict": "pass", "margin": True},
        {"check": "e", "verdict": "pass", "margin": float("inf")},
    ]
    agg = aggregate_check_rows(rows)
    assert agg["worst_margins"] == [("a", 0.1235)]


def test_by_severity_puts_failures_first_then_names():
    rows = [
        {"check": "young", "verdict": "pass"},
        {"check": "hammer", "verdict": "pass"},
        {"check": "time", "verdict": "saturated"},
        {"check": "gradient", "verdict": "fail"},
        {"check": "delta2", "verdict": "bogus"},
    ]
    agg = aggregate_check_rows(rows)
    assert agg["by_severity"] == ["delta2", "gradient", "time", "hammer", "young"]
