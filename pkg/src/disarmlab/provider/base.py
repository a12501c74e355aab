"""Provider contract shared by the scripted and remote backends.

A provider makes three decisions: which candidate technique to investigate,
what plan to run for it, and which atomic claims a finding supports.
Subclasses only produce raw dictionaries; this base class parses and
validates them and runs the repair loop, so nothing unvalidated reaches the
engine.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass
from typing import Any

from ..datastore import SummaryStats
from ..evidence import Finding
from ..plans import AtomicClaimDraft, InvestigationPlan, PlanValidationError, validate_plan
from ..taxonomy import Taxonomy, Technique
from ..verifier import ConditionError, compile_condition

logger = logging.getLogger(__name__)

SELECTION_CRITERIA = ("new_insight", "pattern_match", "operationalizability", "specificity")
DEFAULT_REPAIRS = 2
DEFAULT_ATOMIC_CAP = 3


class ProviderError(Exception):
    pass


class ProviderConfigError(ProviderError):
    """Misconfiguration detected at startup (e.g. missing credentials)."""


class ProviderContractError(ProviderError):
    """Provider output violated the contract and could not be repaired."""


class ProviderOutputError(ProviderError):
    """Raw output that failed validation; carries the problems for a repair prompt."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


class ExtractionFailure(ProviderError):
    """No compilable claim came out of a finding."""


@dataclass(frozen=True)
class FindingSummary:
    iteration_index: int
    technique_id: str | None
    evidence_type: str | None
    signal_strength: float | None
    status: str


@dataclass(frozen=True)
class InvestigationContext:
    run_id: str
    iteration_index: int
    mode: str
    summary: SummaryStats
    history: tuple[FindingSummary, ...] = ()

    def __post_init__(self):
        if self.iteration_index < 2:
            raise ValueError("investigation context starts at iteration 2")
        if len(self.history) != self.iteration_index - 2:
            raise ValueError(
                f"history for iteration {self.iteration_index} must hold {self.iteration_index - 2} rounds, "
                f"got {len(self.history)}"
            )
        if self.mode not in ("explore", "exploit"):
            raise ValueError(f"mode must be explore or exploit, got {self.mode!r}")

    def times_tested(self, technique_id: str) -> int:
        return sum(1 for h in self.history if h.technique_id == technique_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "iteration_index": self.iteration_index,
            "mode": self.mode,
            "summary": self.summary.to_dict(),
            "history": [asdict(h) for h in self.history],
        }


@dataclass(frozen=True)
class Selection:
    technique_id: str
    evidence_type: str
    justification: str
    criteria: tuple[str, ...]


@dataclass
class ProviderCall:
    provider: str
    operation: str
    attempt: int
    ok: bool
    latency: float
    error: str | None = None
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    request: str | None = None
    response: str | None = None


class Provider:
    """Base class; subclasses implement ``_select``, ``_draft_plan`` and ``_extract_claims``."""

    name = "abstract"

    def __init__(self, taxonomy: Taxonomy, max_repairs: int = DEFAULT_REPAIRS, atomic_cap: int = DEFAULT_ATOMIC_CAP):
        self.taxonomy = taxonomy
        self.max_repairs = max_repairs
        self.atomic_cap = atomic_cap
        self.calls: list[ProviderCall] = []
        self.errors: list[str] = []
        self.default_pass = 7.0
        self.default_fail = 4.0

    # bookkeeping ---------------------------------------------------------

    def drain(self) -> tuple[list[ProviderCall], list[str]]:
        calls, errors = self.calls, self.errors
        self.calls, self.errors = [], []
        return calls, errors

    def _record(self, operation: str, attempt: int, started: float, ok: bool, **kw) -> None:
        latency = max(time.perf_counter() - started, 1e-9)
        self.calls.append(ProviderCall(self.name, operation, attempt, ok, latency, **kw))

    # contract ------------------------------------------------------------

    def select_technique(self, context: InvestigationContext, candidates: list[Technique]) -> Selection:
        if not candidates:
            raise ValueError("no candidate techniques")
        raw = self._select(context, candidates)
        ids = {c.id for c in candidates}
        tid = raw.get("technique_id")
        if tid not in ids:
            raise ProviderContractError(f"provider selected {tid!r}, which is not among the candidates")
        criteria = tuple(c for c in raw.get("criteria") or () if c in SELECTION_CRITERIA)
        if not criteria:
            raise ProviderContractError("selection justification cites no selection criterion")
        return Selection(tid, str(raw.get("evidence_type") or ""), str(raw.get("justification") or ""), criteria)

    def draft_plan(self, technique: Technique, context: InvestigationContext) -> InvestigationPlan:
        feedback: list[str] | None = None
        for attempt in range(self.max_repairs + 1):
            try:
                raw = self._draft_plan(technique, context, feedback)
                plan = InvestigationPlan.from_dict(raw, self.default_pass, self.default_fail)
                validate_plan(plan, self.taxonomy, expected_technique=technique.id)
                return plan
            except (ProviderOutputError, PlanValidationError) as exc:
                feedback = list(exc.problems)
                msg = f"plan attempt {attempt + 1} for {technique.id} rejected: {exc}"
                logger.warning(msg)
                self.errors.append(msg)
        raise ProviderContractError(f"no valid plan for {technique.id} after {self.max_repairs} repairs: {feedback}")

    def extract_atomic_claims(self, finding: Finding) -> list[AtomicClaimDraft]:
        raw = self._extract_claims(finding)
        if len(raw) > self.atomic_cap:
            msg = f"provider returned {len(raw)} claims for {finding.finding_id}; keeping the first {self.atomic_cap}"
            logger.warning(msg)
            self.errors.append(msg)
            raw = raw[: self.atomic_cap]
        drafts = []
        for i, item in enumerate(raw):
            try:
                draft = AtomicClaimDraft.from_dict(item)
                compile_condition(draft)
            except ConditionError as exc:
                if exc.explicit_threshold:
                    msg = f"claim {i} of {finding.finding_id} dropped: {exc}"
                    logger.warning(msg)
                    self.errors.append(msg)
                    continue
                # kept: verification records the missing threshold as a failed criterion
            except PlanValidationError as exc:
                msg = f"claim {i} of {finding.finding_id} dropped: {exc}"
                logger.warning(msg)
                self.errors.append(msg)
                continue
            drafts.append(draft)
        if not drafts:
            raise ExtractionFailure(f"no compilable claims for {finding.finding_id}")
        return drafts

    # backend hooks -------------------------------------------------------

    def _select(self, context: InvestigationContext, candidates: list[Technique]) -> dict[str, Any]:
        raise NotImplementedError

    def _draft_plan(self, technique: Technique, context: InvestigationContext, feedback: list[str] | None) -> dict[str, Any]:
        raise NotImplementedError

    def _extract_claims(self, finding: Finding) -> list[dict[str, Any]]:
        raise NotImplementedError


def strength_for(signal_strength: float) -> str:
    if signal_strength >= 7.0:
        return "strong"
    if signal_strength >= 4.0:
        return "moderate"
    return "weak"

