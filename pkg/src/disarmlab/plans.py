"""Structured investigation plans and atomic claim drafts.

Everything a provider hands to the engine passes through these parsers;
``from_dict`` enforces shape and :func:`validate_plan` adds the checks that
need the taxonomy and the SQL gate.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field
from decimal import Decimal
from typing import Any

from .sandbox import SandboxError, check_query
from .taxonomy import Taxonomy

EXTRACTOR_ARITY = {
    "cell": 2,
    "count_rows": 0,
    "max": 1,
    "min": 1,
    "mean": 1,
    "stddev": 1,
    "ratio": 2,
    "share_above": 2,
}
RUBRIC_COMPARATORS = {"<": "<", "<=": "<=", "≤": "<=", "=": "=", "==": "=", ">=": ">=", "≥": ">=", ">": ">"}
CONDITION_COMPARATORS = {"<": "<", "<=": "<=", "≤": "<=", ">=": ">=", "≥": ">=", ">": ">"}
EVIDENCE_TYPES = ("quantitative_metric", "temporal_pattern", "content_similarity", "network_structure")
STRENGTHS = ("weak", "moderate", "strong")
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class PlanValidationError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


def compare(value: float, comparator: str, threshold: float) -> bool:
    if comparator == "<":
        return value < threshold
    if comparator == "<=":
        return value <= threshold
    if comparator == "=":
        return value == threshold
    if comparator == ">=":
        return value >= threshold
    if comparator == ">":
        return value > threshold
    raise ValueError(f"unknown comparator {comparator!r}")


def _split_args(text: str) -> list[str]:
    args, depth, cur = [], 0, []
    for ch in text:
        if ch == "," and depth == 0:
            args.append("".join(cur).strip())
            cur = []
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur.append(ch)
    if "".join(cur).strip():
        args.append("".join(cur).strip())
    return args


def parse_extractor(spec: Any) -> dict[str, Any]:
    """Accept ``{"op": ..., "args": [...]}`` or the call form ``"ratio(max(count), mean(count))"``."""
    if isinstance(spec, str):
        m = re.fullmatch(r"\s*([a-z_]+)\s*\((.*)\)\s*", spec, re.DOTALL)
        if not m:
            raise ValueError(f"cannot parse extractor {spec!r}")
        op, args = m.group(1), [a.strip("'\"") for a in _split_args(m.group(2))]
    elif isinstance(spec, dict):
        op, args = spec.get("op"), list(spec.get("args", []))
    else:
        raise ValueError(f"extractor must be a string or object, got {type(spec).__name__}")
    if op not in EXTRACTOR_ARITY:
        raise ValueError(f"unknown extractor {op!r}")
    if len(args) != EXTRACTOR_ARITY[op]:
        raise ValueError(f"extractor {op} takes {EXTRACTOR_ARITY[op]} arguments, got {len(args)}")
    if op == "cell":
        try:
            args[0] = int(args[0])
        except (TypeError, ValueError):
            raise ValueError(f"cell row index must be an integer, got {args[0]!r}") from None
        if isinstance(args[1], str) and args[1].isdigit():
            args[1] = int(args[1])
    if op == "share_above":
        args[1] = float(args[1])
    return {"op": op, "args": args}


@dataclass(frozen=True)
class MetricDefinition:
    name: str
    query_index: int
    extractor: dict[str, Any]

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MetricDefinition":
        return cls(name=str(d["name"]), query_index=int(d["query_index"]), extractor=parse_extractor(d["extractor"]))

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "query_index": self.query_index, "extractor": self.extractor}


@dataclass(frozen=True)
class RubricCheck:
    metric_name: str
    comparator: str
    threshold: float
    points: float

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RubricCheck":
        comp = RUBRIC_COMPARATORS.get(str(d["comparator"]).strip())
        if comp is None:
            raise ValueError(f"unknown rubric comparator {d['comparator']!r}")
        return cls(str(d["metric_name"]), comp, float(d["threshold"]), float(d["points"]))


@dataclass(frozen=True)
class ScoringRubric:
    checks: tuple[RubricCheck, ...]

    @property
    def total_points(self) -> Decimal:
        return sum((Decimal(repr(c.points)) for c in self.checks), Decimal(0))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScoringRubric":
        return cls(tuple(RubricCheck.from_dict(c) for c in d["checks"]))

    def to_dict(self) -> dict[str, Any]:
        return {"checks": [asdict(c) for c in self.checks]}


@dataclass(frozen=True)
class InvestigationPlan:
    technique_id: str
    evidence_type: str
    hypothesis: str
    analysis_steps: tuple[str, ...]
    queries: tuple[str, ...]
    metric_definitions: tuple[MetricDefinition, ...]
    rubric: ScoringRubric
    pass_threshold: float = 7.0
    fail_threshold: float = 4.0

    @classmethod
    def from_dict(
        cls, d: dict[str, Any], default_pass: float = 7.0, default_fail: float = 4.0
    ) -> "InvestigationPlan":
        """Parse provider output; raises :class:`PlanValidationError` listing every problem found.

        Thresholds absent from ``d`` fall back to ``default_pass``/``default_fail``.
        """
        if not isinstance(d, dict):
            raise PlanValidationError([f"plan must be an object, got {type(d).__name__}"])
        problems: list[str] = []
        for key in ("technique_id", "evidence_type", "hypothesis", "queries", "metric_definitions", "rubric"):
            if key not in d:
                problems.append(f"missing field {key!r}")
        if problems:
            raise PlanValidationError(problems)
        metrics, checks = [], []
        for i, m in enumerate(d["metric_definitions"] or []):
            try:
                metrics.append(MetricDefinition.from_dict(m))
            except (KeyError, TypeError, ValueError) as exc:
                problems.append(f"metric_definitions[{i}]: {exc}")
        rubric_raw = d["rubric"] if isinstance(d["rubric"], dict) else {"checks": d["rubric"]}
        for i, c in enumerate(rubric_raw.get("checks") or []):
            try:
                checks.append(RubricCheck.from_dict(c))
            except (KeyError, TypeError, ValueError) as exc:
                problems.append(f"rubric.checks[{i}]: {exc}")
        queries = d["queries"]
        if not isinstance(queries, list) or not all(isinstance(q, str) for q in queries):
            problems.append("queries must be a list of SQL strings")
            queries = []
        try:
            pass_t = float(d["pass_threshold"]) if d.get("pass_threshold") is not None else default_pass
            fail_t = float(d["fail_threshold"]) if d.get("fail_threshold") is not None else default_fail
        except (TypeError, ValueError):
            problems.append("thresholds must be numbers")
            pass_t, fail_t = 7.0, 4.0
        if problems:
            raise PlanValidationError(problems)
        plan = cls(
            technique_id=str(d["technique_id"]),
            evidence_type=str(d["evidence_type"]),
            hypothesis=str(d["hypothesis"]),
            analysis_steps=tuple(str(s) for s in d.get("analysis_steps") or ()),
            queries=tuple(queries),
            metric_definitions=tuple(metrics),
            rubric=ScoringRubric(tuple(checks)),
            pass_threshold=pass_t,
            fail_threshold=fail_t,
        )
        problems = plan.structural_problems()
        if problems:
            raise PlanValidationError(problems)
        return plan

    def structural_problems(self) -> list[str]:
        problems = []
        if not self.queries:
            problems.append("plan has no queries")
        if not self.rubric.checks:
            problems.append("rubric has no checks")
        if not (0 <= self.fail_threshold < self.pass_threshold <= 10):
            problems.append(
                f"thresholds must satisfy 0 <= fail ({self.fail_threshold}) < pass ({self.pass_threshold}) <= 10"
            )
        names = [m.name for m in self.metric_definitions]
        for name in names:
            if not _IDENT_RE.match(name):
                problems.append(f"metric name {name!r} is not an identifier")
        if len(set(names)) != len(names):
            problems.append("duplicate metric names")
        for m in self.metric_definitions:
            if not 0 <= m.query_index < len(self.queries):
                problems.append(f"metric {m.name}: query_index {m.query_index} out of range")
        for c in self.rubric.checks:
            if c.metric_name not in names:
                problems.append(f"rubric check references undefined metric {c.metric_name!r}")
            if not c.points > 0:
                problems.append(f"rubric check on {c.metric_name}: points must be > 0")
            if not math.isfinite(c.threshold):
                problems.append(f"rubric check on {c.metric_name}: threshold must be finite")
        total = self.rubric.total_points
        if total != Decimal(10):
            problems.append(f"rubric points sum to {total}, expected exactly 10")
        return problems

    def to_dict(self) -> dict[str, Any]:
        return {
            "technique_id": self.technique_id,
            "evidence_type": self.evidence_type,
            "hypothesis": self.hypothesis,
            "analysis_steps": list(self.analysis_steps),
            "queries": list(self.queries),
            "metric_definitions": [m.to_dict() for m in self.metric_definitions],
            "rubric": self.rubric.to_dict(),
            "pass_threshold": self.pass_threshold,
            "fail_threshold": self.fail_threshold,
        }


def validate_plan(plan: InvestigationPlan, taxonomy: Taxonomy, expected_technique: str | None = None) -> None:
    """Checks beyond shape: taxonomy membership and the SQL gate."""
    problems = plan.structural_problems()
    if plan.technique_id not in taxonomy:
        problems.append(f"technique_id {plan.technique_id} not in taxonomy")
    if expected_technique is not None and plan.technique_id != expected_technique:
        problems.append(f"plan is for {plan.technique_id}, expected {expected_technique}")
    for i, q in enumerate(plan.queries):
        try:
            check_query(q)
        except SandboxError as exc:
            problems.append(f"queries[{i}] rejected by sandbox: {exc}")
    if problems:
        raise PlanValidationError(problems)


@dataclass(frozen=True)
class AtomicClaimDraft:
    claim_text: str
    evidence_type: str
    strength: str
    condition: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AtomicClaimDraft":
        problems = []
        text = str(d.get("claim_text") or "").strip()
        if not text:
            problems.append("claim_text is empty")
        if d.get("evidence_type") not in EVIDENCE_TYPES:
            problems.append(f"evidence_type must be one of {EVIDENCE_TYPES}")
        if d.get("strength") not in STRENGTHS:
            problems.append(f"strength must be one of {STRENGTHS}")
        if not isinstance(d.get("condition"), dict):
            problems.append("condition must be an object")
        if problems:
            raise PlanValidationError(problems)
        return cls(text, d["evidence_type"], d["strength"], dict(d["condition"]))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)
