"""Turning atomic claims into account-level predictions and judging them against labels.

A claim's condition is one feature query producing ``(account_id,
feature_value)`` rows, a comparator and an explicit numeric threshold.
Accounts missing from the feature query are predicted negative; unlabeled
accounts never enter the confusion matrix.
"""

from __future__ import annotations

import json
import logging
import math
import sqlite3
from dataclasses import asdict, dataclass
from typing import Any

from . import sandbox
from .plans import CONDITION_COMPARATORS, AtomicClaimDraft, compare
from .sandbox import QueryLimits, SandboxError
from .stats import ConfusionMatrix, fisher_exact_two_sided, odds_ratio

logger = logging.getLogger(__name__)

MIN_ODDS_RATIO = 3.0
ALPHA = 0.05


class ConditionError(ValueError):
    """A claim's condition cannot be compiled."""

    def __init__(self, message: str, explicit_threshold: bool = True):
        self.explicit_threshold = explicit_threshold
        super().__init__(message)


class DegenerateLabels(ValueError):
    """The dataset lacks either positive or negative labeled accounts."""


class ConditionEvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionCondition:
    feature_query: str
    comparator: str
    threshold: float
    description: str = ""

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class Criteria:
    explicit_threshold: bool
    effect_size_ok: bool
    significance_ok: bool

    @property
    def all_met(self) -> bool:
        return self.explicit_threshold and self.effect_size_ok and self.significance_ok


@dataclass(frozen=True)
class VerificationResult:
    atomic_evidence_id: str
    matrix: ConfusionMatrix | None
    odds_ratio: float | None
    or_corrected: bool
    p_value: float | None
    criteria: Criteria
    status: str
    note: str | None = None


def _threshold(raw: Any) -> float | None:
    if raw is None or isinstance(raw, bool):
        return None
    try:
        value = float(raw)
    except (TypeError, ValueError):
        return None
    return value if math.isfinite(value) else None


def compile_condition(draft: AtomicClaimDraft | dict[str, Any]) -> DetectionCondition:
    """Syntactic validation of a claim condition; touches no data."""
    cond = draft.condition if isinstance(draft, AtomicClaimDraft) else draft
    threshold = _threshold(cond.get("threshold"))
    if threshold is None:
        raise ConditionError(f"condition lacks an explicit numeric threshold ({cond.get('threshold')!r})", False)
    comparator = CONDITION_COMPARATORS.get(str(cond.get("comparator", "")).strip())
    if comparator is None:
        raise ConditionError(f"unsupported comparator {cond.get('comparator')!r}")
    query = cond.get("feature_query")
    if not isinstance(query, str):
        raise ConditionError("condition lacks a feature_query")
    try:
        query = sandbox.check_query(query)
    except SandboxError as exc:
        raise ConditionError(f"feature_query rejected by sandbox: {exc}") from exc
    return DetectionCondition(query, comparator, threshold, str(cond.get("description") or ""))


def feature_values(conn: sqlite3.Connection, condition: DetectionCondition, limits: QueryLimits = QueryLimits()) -> dict[str, float | None]:
    table = sandbox.execute(conn, condition.feature_query, limits)
    if table.truncated:
        raise ConditionEvaluationError("feature query exceeded max_rows")
    if len(table.columns) < 2:
        raise ConditionEvaluationError("feature query must return (account_id, feature_value)")
    values: dict[str, float | None] = {}
    for row in table.rows:
        aid = str(row[0])
        if aid in values:
            raise ConditionEvaluationError(f"feature query returned account {aid!r} more than once")
        try:
            values[aid] = None if row[1] is None else float(row[1])
        except (TypeError, ValueError):
            values[aid] = None
    return values


def apply_condition(
    conn: sqlite3.Connection,
    condition: DetectionCondition,
    labels: dict[str, str],
    limits: QueryLimits = QueryLimits(),
) -> set[str]:
    """Labeled accounts whose feature value satisfies the condition."""
    values = feature_values(conn, condition, limits)
    return {
        aid for aid in labels
        if values.get(aid) is not None and compare(values[aid], condition.comparator, condition.threshold)
    }


def build_confusion(predicted: set[str], labels: dict[str, str]) -> ConfusionMatrix:
    positives = {a for a, lab in labels.items() if lab == "positive"}
    negatives = {a for a, lab in labels.items() if lab == "negative"}
    if not positives or not negatives:
        raise DegenerateLabels(
            f"need both classes to verify a claim (positive={len(positives)}, negative={len(negatives)})"
        )
    tp = len(predicted & positives)
    fp = len(predicted & negatives)
    return ConfusionMatrix(tp, fp, len(positives) - tp, len(negatives) - fp)


def verdict(
    atomic_evidence_id: str,
    explicit_threshold: bool,
    matrix: ConfusionMatrix | None,
    or_value: float | None,
    p_value: float | None,
    or_corrected: bool = False,
    note: str | None = None,
) -> VerificationResult:
    criteria = Criteria(
        explicit_threshold=bool(explicit_threshold),
        effect_size_ok=or_value is not None and or_value >= MIN_ODDS_RATIO,
        significance_ok=p_value is not None and p_value < ALPHA,
    )
    return VerificationResult(
        atomic_evidence_id, matrix, or_value, or_corrected, p_value, criteria,
        "PASS" if criteria.all_met else "FAIL", note,
    )


def verify_claim(
    conn: sqlite3.Connection,
    atomic_evidence_id: str,
    condition: dict[str, Any],
    labels: dict[str, str],
    limits: QueryLimits = QueryLimits(),
) -> VerificationResult:
    """Compile, apply and test one stored claim condition."""
    try:
        compiled = compile_condition(condition)
    except ConditionError as exc:
        return verdict(atomic_evidence_id, exc.explicit_threshold, None, None, None, note=str(exc))
    try:
        predicted = apply_condition(conn, compiled, labels, limits)
        matrix = build_confusion(predicted, labels)
    except (ConditionEvaluationError, DegenerateLabels, SandboxError, sandbox.QueryTimeout, sqlite3.Error) as exc:
        return verdict(atomic_evidence_id, True, None, None, None, note=f"{type(exc).__name__}: {exc}")
    or_value, corrected = odds_ratio(matrix)
    p = fisher_exact_two_sided(matrix)
    return verdict(atomic_evidence_id, True, matrix, or_value, p, corrected)


def persist_verification(conn: sqlite3.Connection, run_id: str, result: VerificationResult) -> int:
    attempt = conn.execute(
        "SELECT COALESCE(MAX(attempt), 0) + 1 FROM verifications WHERE atomic_evidence_id = ?",
        (result.atomic_evidence_id,),
    ).fetchone()[0]
    m = result.matrix
    conn.execute(
        "INSERT INTO verifications VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
        (
            result.atomic_evidence_id, attempt, run_id,
            *(m.as_tuple() if m else (None,) * 4),
            result.odds_ratio, int(result.or_corrected), result.p_value,
            int(result.criteria.explicit_threshold), int(result.criteria.effect_size_ok),
            int(result.criteria.significance_ok), result.status, result.note,
        ),
    )
    return attempt


def verify_run(store, run_id: str, reverify: bool = False) -> list[VerificationResult]:
    """Verify every claim of ``run_id`` that has no verification yet (all claims with ``reverify``)."""
    with store.read() as conn:
        run = conn.execute("SELECT dataset FROM runs WHERE run_id = ?", (run_id,)).fetchone()
        if run is None:
            raise KeyError(f"unknown run {run_id!r}")
        pending = conn.execute(
            "SELECT a.atomic_evidence_id, a.condition FROM atomic_evidence a WHERE a.run_id = ? "
            + ("" if reverify else "AND NOT EXISTS (SELECT 1 FROM verifications v WHERE v.atomic_evidence_id = a.atomic_evidence_id) ")
            + "ORDER BY a.iteration_index, a.ordinal",
            (run_id,),
        ).fetchall()
    dataset = run["dataset"]
    labels = store.labeled_accounts(dataset)
    results = []
    with store.query_session(dataset) as qconn:
        for aid, cond in pending:
            results.append(verify_claim(qconn, aid, json.loads(cond), labels, store.limits))
    with store.write() as wconn:
        for r in results:
            persist_verification(wconn, run_id, r)
    logger.info("verified %d claims for %s (%d PASS)", len(results), run_id, sum(r.status == "PASS" for r in results))
    return results
