import sqlite3

import pytest

from conftest import make_store
from disarmlab.evidence import (
    FindingError,
    build_finding,
    classify_status,
    evaluate_extractor,
    execute_plan,
    load_finding,
    persist_finding,
    round_half_up,
    score_finding,
)
from disarmlab.plans import InvestigationPlan, ScoringRubric, parse_extractor
from disarmlab.sandbox import Table

ACCOUNTS = [{"account_id": "a1", "label": "positive"}, {"account_id": "a2", "label": "negative"}]
# 6 messages at 09h, 2 at 10h, 1 at 11h, 1 at 12h -> hourly counts [6, 2, 1, 1]
HOURS = [9] * 6 + [10, 10, 11, 12]
MESSAGES = [
    {"message_id": f"m{i}", "account_id": "a1", "timestamp": f"2019-03-01T{h:02d}:00:00Z", "text": f"t{i}"}
    for i, h in enumerate(HOURS)
]
PLAN = {
    "technique_id": "T0049",
    "evidence_type": "temporal_pattern",
    "hypothesis": "burst",
    "queries": [
        "SELECT strftime('%H', timestamp) AS hour, COUNT(*) AS count FROM messages GROUP BY hour ORDER BY hour",
        "SELECT * FROM no_such_table",
    ],
    "metric_definitions": [
        {"name": "max_hour_ratio", "query_index": 0, "extractor": "ratio(max(count), mean(count))"},
        {"name": "hours", "query_index": 0, "extractor": "count_rows()"},
        {"name": "broken", "query_index": 1, "extractor": "count_rows()"},
    ],
    "rubric": {"checks": [
        {"metric_name": "max_hour_ratio", "comparator": ">=", "threshold": 2.0, "points": 4},
        {"metric_name": "hours", "comparator": ">=", "threshold": 4, "points": 3},
        {"metric_name": "broken", "comparator": ">=", "threshold": 0, "points": 3},
    ]},
}


@pytest.fixture
def store(tmp_path):
    return make_store(tmp_path, ACCOUNTS, MESSAGES)


def test_execute_plan_metrics(store):
    plan = InvestigationPlan.from_dict(PLAN)
    with store.query_session("tiny") as conn:
        ex = execute_plan(conn, plan)
    # oracle: counts [6, 2, 1, 1], mean 2.5, max 6
    assert ex.metrics["max_hour_ratio"] == pytest.approx(6 / 2.5)
    assert ex.metrics["hours"] == 4.0
    assert ex.metrics["broken"] is None and ex.unavailable == ["broken"]
    assert ex.query_log[0].row_count == 4 and ex.query_log[1].error


def test_score_partial_checks(store):
    plan = InvestigationPlan.from_dict(PLAN)
    with store.query_session("tiny") as conn:
        finding = build_finding("run-x", 3, plan, execute_plan(conn, plan))
    assert finding.signal_strength == 7.0 and finding.status == "PASS"
    assert finding.finding_id == "run-x/i03"


def _rubric(*checks):
    return ScoringRubric.from_dict({"checks": [
        {"metric_name": m, "comparator": ">=", "threshold": 1, "points": p} for m, p in checks
    ]})


def test_score_bounds():
    r = _rubric(("a", 4), ("b", 3), ("c", 3))
    assert score_finding(r, {"a": 1, "b": 1, "c": 1}) == 10.0
    assert score_finding(r, {"a": 1, "b": 1, "c": 0}) == 7.0
    assert score_finding(r, {"a": None, "b": None, "c": None}) == 0.0
    assert score_finding(r, {}) == 0.0


def test_score_decimal_sum_is_exact():
    r = _rubric(*[(f"m{i}", 0.1) for i in range(10)] + [("z", 9.0)])
    assert score_finding(r, {f"m{i}": 1 for i in range(10)}) == 1.0


def test_round_half_up():
    assert round_half_up(6.85) == 6.9
    assert round_half_up(6.95) == 7.0
    assert round_half_up(0.05) == 0.1


@pytest.mark.parametrize("score, status", [(7.0, "PASS"), (6.9, "INCONCLUSIVE"), (4.0, "INCONCLUSIVE"), (3.9, "FAIL"), (10.0, "PASS"), (0.0, "FAIL")])
def test_classify_status(score, status):
    assert classify_status(score) == status


def test_classify_out_of_range():
    with pytest.raises(ValueError):
        classify_status(10.5)


def test_extractors_on_edge_tables():
    empty = Table(["x"], [])
    assert evaluate_extractor(empty, parse_extractor("count_rows()")) == 0.0
    assert evaluate_extractor(empty, parse_extractor("cell(0, 'x')")) is None
    assert evaluate_extractor(empty, parse_extractor("max(x)")) is None
    t = Table(["x", "y"], [(1, 2), (3, None), (5, 6)])
    assert evaluate_extractor(t, parse_extractor("stddev(x)")) == pytest.approx((8 / 3) ** 0.5)
    assert evaluate_extractor(t, parse_extractor("ratio(x, y)")) == pytest.approx(9 / 8)
    assert evaluate_extractor(t, parse_extractor("share_above(x, 2)")) == pytest.approx(2 / 3)
    assert evaluate_extractor(t, parse_extractor("cell(1, 'y')")) is None
    assert evaluate_extractor(t, parse_extractor("cell(2, 1)")) == 6.0
    assert evaluate_extractor(t, parse_extractor("max(nope)")) is None
    assert evaluate_extractor(Table(["x"], [(0,)]), parse_extractor("ratio(x, x)")) is None


def test_persist_round_trip_and_uniqueness(store, taxonomy):
    plan = InvestigationPlan.from_dict(PLAN)
    with store.query_session("tiny") as conn:
        finding = build_finding("run-x", 2, plan, execute_plan(conn, plan))
    with store.write() as conn:
        persist_finding(conn, finding, taxonomy)
    with store.read() as conn:
        again = load_finding(conn, finding.finding_id)
    assert again == finding
    with pytest.raises(FindingError, match="already has a finding"):
        with store.write() as conn:
            persist_finding(conn, finding, taxonomy)


def test_invariants_rejected(store, taxonomy):
    plan = InvestigationPlan.from_dict(PLAN)
    with store.query_session("tiny") as conn:
        finding = build_finding("run-x", 2, plan, execute_plan(conn, plan))
    finding.metric_values["sneaky"] = 1.0
    with pytest.raises(FindingError, match="undeclared"):
        with store.write() as conn:
            persist_finding(conn, finding, taxonomy)
    del finding.metric_values["sneaky"]
    finding.status = "FAIL"
    with pytest.raises(FindingError, match="inconsistent"):
        with store.write() as conn:
            persist_finding(conn, finding, taxonomy)


def test_findings_are_immutable(store, taxonomy):
    plan = InvestigationPlan.from_dict(PLAN)
    with store.query_session("tiny") as conn:
        finding = build_finding("run-x", 2, plan, execute_plan(conn, plan))
    with store.write() as conn:
        persist_finding(conn, finding, taxonomy)
    with pytest.raises(sqlite3.DatabaseError, match="immutable"):
        with store.write() as conn:
            conn.execute("UPDATE findings SET status = 'FAIL'")
