"""Executing plans, rubric scoring and finding persistence."""

from __future__ import annotations

import json
import math
import re
import sqlite3
import statistics
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Any

from . import sandbox
from .plans import InvestigationPlan, MetricDefinition, ScoringRubric, compare
from .sandbox import QueryLimits, QueryTimeout, SandboxError, Table
from .taxonomy import Taxonomy

STATUSES = ("PASS", "INCONCLUSIVE", "FAIL")
_AGG_RE = re.compile(r"^(max|min|mean|sum|stddev)\((\w+)\)$")


class FindingError(ValueError):
    pass


@dataclass(frozen=True)
class QueryLogEntry:
    query: str
    row_count: int | None
    duration: float = field(default=0.0, compare=False)
    error: str | None = None
    truncated: bool = False


@dataclass
class PlanExecution:
    metrics: dict[str, float | None]
    query_log: list[QueryLogEntry]
    tables: list[Table | None] = field(default_factory=list, repr=False)

    @property
    def unavailable(self) -> list[str]:
        return [k for k, v in self.metrics.items() if v is None]


@dataclass
class Finding:
    finding_id: str
    run_id: str
    iteration_index: int
    technique_id: str
    evidence_type: str
    hypothesis: str
    metric_values: dict[str, float | None]
    signal_strength: float
    status: str
    query_log: list[QueryLogEntry]
    plan: InvestigationPlan


def _numbers(table: Table, col: str) -> list[float]:
    if col not in table.columns:
        raise KeyError(col)
    out = []
    for v in table.column(col):
        if v is None:
            continue
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            out.append(float(v))
        else:
            try:
                out.append(float(v))
            except (TypeError, ValueError):
                continue
    return out


def _aggregate(table: Table, operand: str) -> float | None:
    m = _AGG_RE.match(operand)
    op, col = (m.group(1), m.group(2)) if m else ("sum", operand)
    values = _numbers(table, col)
    if not values:
        return None
    if op == "max":
        return max(values)
    if op == "min":
        return min(values)
    if op == "mean":
        return math.fsum(values) / len(values)
    if op == "sum":
        return math.fsum(values)
    return statistics.pstdev(values)


def evaluate_extractor(table: Table | None, extractor: dict[str, Any]) -> float | None:
    """Apply one extractor to a query result.  ``None`` marks the metric unavailable.

    ``stddev`` is the population standard deviation.  ``ratio(a, b)`` takes
    each operand as either a column (summed over rows) or an aggregate call
    such as ``max(count)``.
    """
    if table is None:
        return None
    op, args = extractor["op"], extractor["args"]
    try:
        if op == "count_rows":
            return float(len(table))
        if op == "cell":
            row, col = args
            if not 0 <= row < len(table):
                return None
            idx = col if isinstance(col, int) else table.columns.index(col)
            value = table.rows[row][idx]
            return None if value is None else float(value)
        if op in ("max", "min", "mean", "stddev"):
            return _aggregate(table, f"{op}({args[0]})")
        if op == "ratio":
            num, den = _aggregate(table, args[0]), _aggregate(table, args[1])
            if num is None or den is None or den == 0:
                return None
            return num / den
        if op == "share_above":
            values = _numbers(table, args[0])
            if not values:
                return None
            return sum(1 for v in values if v > args[1]) / len(values)
    except (KeyError, ValueError, IndexError, TypeError):
        return None
    raise ValueError(f"unknown extractor {op!r}")


def execute_plan(conn: sqlite3.Connection, plan: InvestigationPlan, limits: QueryLimits = QueryLimits()) -> PlanExecution:
    """Run every plan query in order, then evaluate the metric definitions.

    ``conn`` is a sandboxed connection from :meth:`Store.query_session`.  A
    failing query leaves its metrics unavailable rather than aborting the plan.
    """
    tables: list[Table | None] = []
    log: list[QueryLogEntry] = []
    for sql in plan.queries:
        try:
            table = sandbox.execute(conn, sql, limits)
        except (SandboxError, QueryTimeout, sqlite3.Error) as exc:
            tables.append(None)
            log.append(QueryLogEntry(sql, None, 0.0, f"{type(exc).__name__}: {exc}"))
            continue
        tables.append(table)
        log.append(QueryLogEntry(sql, len(table), table.duration, None, table.truncated))
    metrics = {m.name: _evaluate_metric(m, tables) for m in plan.metric_definitions}
    return PlanExecution(metrics, log, tables)


def _evaluate_metric(metric: MetricDefinition, tables: list[Table | None]) -> float | None:
    value = evaluate_extractor(tables[metric.query_index], metric.extractor)
    if value is not None and not math.isfinite(value):
        return None
    return value


def round_half_up(value: float | Decimal, places: int = 1) -> float:
    q = Decimal(1).scaleb(-places)
    d = value if isinstance(value, Decimal) else Decimal(repr(value))
    return float(d.quantize(q, rounding=ROUND_HALF_UP))


def score_finding(rubric: ScoringRubric, metrics: dict[str, float | None]) -> float:
    """Sum of points for satisfied checks, rounded half-up to one decimal."""
    total = Decimal(0)
    for check in rubric.checks:
        value = metrics.get(check.metric_name)
        if value is None:
            continue
        if compare(value, check.comparator, check.threshold):
            total += Decimal(repr(check.points))
    return round_half_up(total, 1)


def classify_status(score: float, pass_threshold: float = 7.0, fail_threshold: float = 4.0) -> str:
    if not 0 <= score <= 10:
        raise ValueError(f"score {score} outside [0, 10]")
    if score >= pass_threshold:
        return "PASS"
    if score < fail_threshold:
        return "FAIL"
    return "INCONCLUSIVE"


def finding_id_for(run_id: str, iteration_index: int) -> str:
    return f"{run_id}/i{iteration_index:02d}"


def build_finding(run_id: str, iteration_index: int, plan: InvestigationPlan, execution: PlanExecution) -> Finding:
    score = score_finding(plan.rubric, execution.metrics)
    return Finding(
        finding_id=finding_id_for(run_id, iteration_index),
        run_id=run_id,
        iteration_index=iteration_index,
        technique_id=plan.technique_id,
        evidence_type=plan.evidence_type,
        hypothesis=plan.hypothesis,
        metric_values=dict(execution.metrics),
        signal_strength=score,
        status=classify_status(score, plan.pass_threshold, plan.fail_threshold),
        query_log=list(execution.query_log),
        plan=plan,
    )


def check_finding(finding: Finding, taxonomy: Taxonomy | None = None) -> None:
    declared = {m.name for m in finding.plan.metric_definitions}
    undeclared = sorted(set(finding.metric_values) - declared)
    if undeclared:
        raise FindingError(f"finding reports undeclared metrics {undeclared}")
    if finding.iteration_index < 2:
        raise FindingError("findings belong to investigation rounds (iteration >= 2)")
    if not 0 <= finding.signal_strength <= 10:
        raise FindingError(f"signal strength {finding.signal_strength} outside [0, 10]")
    expected = classify_status(finding.signal_strength, finding.plan.pass_threshold, finding.plan.fail_threshold)
    if finding.status != expected:
        raise FindingError(f"status {finding.status} inconsistent with score (expected {expected})")
    if taxonomy is not None and finding.technique_id not in taxonomy:
        raise FindingError(f"technique {finding.technique_id} not in taxonomy")


def _dump(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def persist_finding(conn: sqlite3.Connection, finding: Finding, taxonomy: Taxonomy | None = None) -> str:
    """Insert ``finding`` using an open write connection.

    Durations are kept out of the ``findings`` row (they go to the iteration
    record) so that reruns produce byte-identical finding rows.
    """
    check_finding(finding, taxonomy)
    exists = conn.execute(
        "SELECT finding_id FROM findings WHERE run_id = ? AND iteration_index = ?",
        (finding.run_id, finding.iteration_index),
    ).fetchone()
    if exists:
        raise FindingError(f"round {finding.iteration_index} of run {finding.run_id} already has a finding")
    log = [{"query": q.query, "row_count": q.row_count, "error": q.error, "truncated": q.truncated} for q in finding.query_log]
    conn.execute(
        "INSERT INTO findings VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
        (
            finding.finding_id, finding.run_id, finding.iteration_index, finding.technique_id,
            finding.evidence_type, finding.hypothesis, _dump(finding.plan.to_dict()),
            _dump(finding.metric_values), finding.signal_strength, finding.status, _dump(log),
        ),
    )
    return finding.finding_id


def load_finding(conn: sqlite3.Connection, finding_id: str) -> Finding | None:
    row = conn.execute(
        "SELECT f.*, i.query_timings FROM findings f LEFT JOIN iterations i "
        "ON i.run_id = f.run_id AND i.iteration_index = f.iteration_index WHERE f.finding_id = ?",
        (finding_id,),
    ).fetchone()
    if row is None:
        return None
    cols = [d[0] for d in conn.execute("SELECT * FROM findings LIMIT 0").description] + ["query_timings"]
    rec = dict(zip(cols, row))
    timings = json.loads(rec["query_timings"]) if rec["query_timings"] else []
    log = [
        QueryLogEntry(e["query"], e["row_count"], timings[i] if i < len(timings) else 0.0, e["error"], e["truncated"])
        for i, e in enumerate(json.loads(rec["query_log"]))
    ]
    return Finding(
        finding_id=rec["finding_id"],
        run_id=rec["run_id"],
        iteration_index=rec["iteration_index"],
        technique_id=rec["technique_id"],
        evidence_type=rec["evidence_type"],
        hypothesis=rec["hypothesis"],
        metric_values=json.loads(rec["metric_values"]),
        signal_strength=rec["signal_strength"],
        status=rec["status"],
        query_log=log,
        plan=InvestigationPlan.from_dict(json.loads(rec["plan"])),
    )
