"""Deterministic playbook-driven provider.

The playbook is JSON keyed by technique id::

    {"version": "...",
     "techniques": {
        "T0049": {"evidence_type": "...", "justification": "...",
                  "criteria": ["pattern_match", ...],
                  "plan": {... InvestigationPlan fields minus technique_id ...},
                  "claims": [{"claim_text": "...", "evidence_type": "...",
                              "strength": "auto", "condition": {...}}]}}}

Claim texts may reference finding metrics as ``{metric_name}`` placeholders.
"""

from __future__ import annotations

import json
import string
import time
from pathlib import Path
from typing import Any

from ..evidence import Finding
from ..taxonomy import Taxonomy, Technique
from .base import InvestigationContext, Provider, ProviderOutputError, strength_for


class PlaybookError(ValueError):
    pass


def default_playbook_path() -> Path:
    return Path(__file__).resolve().parent.parent / "data" / "playbook.json"


def load_playbook(path: str | Path) -> dict[str, Any]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PlaybookError(f"cannot parse playbook {path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("techniques"), dict):
        raise PlaybookError(f"{path}: playbook must be an object with a 'techniques' mapping")
    return doc


class _MetricFormatter(string.Formatter):
    def __init__(self, metrics: dict[str, float | None]):
        self.metrics = metrics

    def get_value(self, key, args, kwargs):
        if isinstance(key, str) and key in self.metrics:
            return self.metrics[key]
        return None

    def format_field(self, value, format_spec):
        if value is None:
            return "n/a"
        return super().format_field(value, format_spec)


class ScriptedProvider(Provider):
    """Chooses and plans from a fixed playbook; same inputs always give the same outputs."""

    name = "scripted"

    def __init__(self, taxonomy: Taxonomy, playbook: dict[str, Any] | str | Path | None = None, **kw):
        super().__init__(taxonomy, **kw)
        if playbook is None:
            playbook = default_playbook_path()
        self.playbook = playbook if isinstance(playbook, dict) else load_playbook(playbook)
        self.entries: dict[str, Any] = self.playbook["techniques"]

    def _select(self, context: InvestigationContext, candidates: list[Technique]) -> dict[str, Any]:
        started = time.perf_counter()
        pool = [c for c in candidates if c.id in self.entries] or list(candidates)
        position = {c.id: i for i, c in enumerate(candidates)}
        if context.mode == "explore":
            chosen = min(pool, key=lambda t: (context.times_tested(t.id), t.id))
            criteria = ["new_insight", "operationalizability"]
        else:
            chosen = min(pool, key=lambda t: (context.times_tested(t.id), not t.is_subtechnique, position[t.id]))
            criteria = ["pattern_match", "specificity"] if chosen.is_subtechnique else ["pattern_match"]
        entry = self.entries.get(chosen.id, {})
        result = {
            "technique_id": chosen.id,
            "evidence_type": entry.get("evidence_type", chosen.name),
            "justification": entry.get("justification", f"{context.mode} choice among {len(candidates)} candidates"),
            "criteria": entry.get("criteria", criteria),
        }
        self._record("select_technique", 1, started, True, response=json.dumps(result, sort_keys=True))
        return result

    def _draft_plan(self, technique: Technique, context: InvestigationContext, feedback: list[str] | None) -> dict[str, Any]:
        started = time.perf_counter()
        entry = self.entries.get(technique.id)
        if entry is None:
            self._record("draft_plan", 1, started, False, error="no playbook entry")
            raise ProviderOutputError([f"playbook has no entry for {technique.id}"])
        plan = dict(entry["plan"])
        plan.setdefault("technique_id", technique.id)
        plan.setdefault("evidence_type", entry.get("evidence_type", technique.name))
        self._record("draft_plan", 1 if feedback is None else 2, started, True)
        return json.loads(json.dumps(plan))

    def _extract_claims(self, finding: Finding) -> list[dict[str, Any]]:
        started = time.perf_counter()
        entry = self.entries.get(finding.technique_id, {})
        fmt = _MetricFormatter(finding.metric_values)
        out = []
        for tmpl in entry.get("claims", []):
            claim = json.loads(json.dumps(tmpl))
            claim["claim_text"] = fmt.format(claim.get("claim_text", ""))
            if claim.get("strength", "auto") == "auto":
                claim["strength"] = strength_for(finding.signal_strength)
            out.append(claim)
        self._record("extract_atomic_claims", 1, started, True)
        return out
