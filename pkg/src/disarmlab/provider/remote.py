"""Chat-completion backend.

Speaks the widely used ``POST {endpoint}`` chat-completions shape: a
``messages`` list in, ``choices[0].message.content`` (a JSON document) and
an optional ``usage`` block out.  Every HTTP attempt is recorded as a
:class:`ProviderCall`; the API key only ever travels in the header.
"""

from __future__ import annotations

import json
import logging
import os
import time
from typing import Any

import httpx
import jsonschema

from ..evidence import Finding
from ..taxonomy import Taxonomy, Technique
from .base import (
    InvestigationContext,
    Provider,
    ProviderConfigError,
    ProviderContractError,
    ProviderError,
    ProviderOutputError,
)

logger = logging.getLogger(__name__)

MAX_TRANSPORT_ATTEMPTS = 3

SELECTION_SCHEMA = {
    "type": "object",
    "required": ["technique_id", "evidence_type", "justification", "criteria"],
    "properties": {
        "technique_id": {"type": "string"},
        "evidence_type": {"type": "string"},
        "justification": {"type": "string"},
        "criteria": {"type": "array", "items": {"type": "string"}, "minItems": 1},
    },
}

_EXTRACTOR = {"oneOf": [{"type": "string"}, {"type": "object", "required": ["op"]}]}
PLAN_SCHEMA = {
    "type": "object",
    "required": ["technique_id", "evidence_type", "hypothesis", "queries", "metric_definitions", "rubric"],
    "properties": {
        "technique_id": {"type": "string"},
        "evidence_type": {"type": "string"},
        "hypothesis": {"type": "string"},
        "analysis_steps": {"type": "array", "items": {"type": "string"}},
        "queries": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "metric_definitions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "query_index", "extractor"],
                "properties": {"name": {"type": "string"}, "query_index": {"type": "integer"}, "extractor": _EXTRACTOR},
            },
        },
        "rubric": {
            "type": "object",
            "required": ["checks"],
            "properties": {
                "checks": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["metric_name", "comparator", "threshold", "points"],
                        "properties": {
                            "metric_name": {"type": "string"},
                            "comparator": {"type": "string"},
                            "threshold": {"type": "number"},
                            "points": {"type": "number"},
                        },
                    },
                }
            },
        },
        "pass_threshold": {"type": "number"},
        "fail_threshold": {"type": "number"},
    },
}

CLAIMS_SCHEMA = {
    "type": "object",
    "required": ["claims"],
    "properties": {
        "claims": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["claim_text", "evidence_type", "strength", "condition"],
                "properties": {
                    "condition": {
                        "type": "object",
                        "required": ["feature_query", "comparator", "threshold"],
                    }
                },
            },
        }
    },
}

SYSTEM_PROMPT = (
    "You are an OSINT analyst investigating coordinated information operations with the DISARM "
    "taxonomy. The dataset lives in SQLite tables accounts(account_id, platform, created_at, "
    "display_name, profile_description, label) and messages(message_id, account_id, timestamp, text, "
    "message_type, parent_id, channel_id, language, reaction_count, link_count, hashtags, mentions). "
    "Timestamps are 'YYYY-MM-DD HH:MM:SS' UTC. Only single read-only SELECT statements are executed. "
    "Never use the label column in plan queries. Reply with one JSON object and nothing else."
)


class TransportError(ProviderError):
    pass


class RemoteProvider(Provider):
    name = "remote"

    def __init__(
        self,
        taxonomy: Taxonomy,
        endpoint: str,
        model: str,
        api_key_env: str = "DISARMLAB_API_KEY",
        timeout: float = 120.0,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        **kw,
    ):
        super().__init__(taxonomy, **kw)
        key = os.environ.get(api_key_env)
        if not key:
            raise ProviderConfigError(f"remote provider needs credentials in environment variable {api_key_env}")
        self.endpoint = endpoint
        self.model = model
        self.backoff = backoff
        self._key = key
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self._operation = "call"

    def close(self) -> None:
        self._client.close()

    def _redact(self, text: str) -> str:
        return text.replace(self._key, "***") if self._key else text

    def _post(self, payload: dict[str, Any]) -> tuple[dict[str, Any], float]:
        """POST with up to three attempts; each attempt is recorded."""
        body = json.dumps(payload, ensure_ascii=False)
        last: Exception | None = None
        for attempt in range(1, MAX_TRANSPORT_ATTEMPTS + 1):
            started = time.perf_counter()
            try:
                resp = self._client.post(
                    self.endpoint,
                    content=body.encode("utf-8"),
                    headers={"Authorization": f"Bearer {self._key}", "Content-Type": "application/json"},
                )
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise TransportError(f"HTTP {resp.status_code}")
                if resp.status_code >= 400:
                    self._record(self._operation, attempt, started, False, error=f"HTTP {resp.status_code}",
                                 request=self._redact(body), response=self._redact(resp.text[:2000]))
                    raise ProviderContractError(f"remote backend refused request: HTTP {resp.status_code}")
                data = resp.json()
            except (httpx.TransportError, TransportError, json.JSONDecodeError) as exc:
                last = exc
                self._record(self._operation, attempt, started, False, error=self._redact(str(exc)) or type(exc).__name__,
                             request=self._redact(body))
                if attempt < MAX_TRANSPORT_ATTEMPTS:
                    time.sleep(self.backoff * 2 ** (attempt - 1))
                continue
            usage = data.get("usage") or {}
            self._record(
                self._operation, attempt, started, True,
                prompt_tokens=usage.get("prompt_tokens", usage.get("input_tokens")),
                completion_tokens=usage.get("completion_tokens", usage.get("output_tokens")),
                request=self._redact(body), response=self._redact(json.dumps(data, ensure_ascii=False)[:20000]),
            )
            return data, time.perf_counter() - started
        raise ProviderContractError(f"transport failed after {MAX_TRANSPORT_ATTEMPTS} attempts: {last}")

    def call_remote_model(self, messages: list[dict[str, str]], schema: dict[str, Any]) -> dict[str, Any]:
        """One structured call.  Raises :class:`ProviderOutputError` on schema violations."""
        payload = {
            "model": self.model,
            "messages": [{"role": "system", "content": SYSTEM_PROMPT}, *messages],
            "temperature": 0,
            "response_format": {"type": "json_object"},
        }
        data, _ = self._post(payload)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProviderOutputError(["response has no choices[0].message.content"]) from None
        try:
            parsed = json.loads(content) if isinstance(content, str) else content
        except json.JSONDecodeError as exc:
            raise ProviderOutputError([f"content is not JSON: {exc.msg}"]) from None
        errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(parsed), key=lambda e: list(e.path))
        if errors:
            raise ProviderOutputError([f"{'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors])
        return parsed

    def _structured(self, operation: str, prompt: str, schema: dict[str, Any]) -> dict[str, Any]:
        self._operation = operation
        messages = [{"role": "user", "content": prompt}]
        problems: list[str] = []
        for _ in range(self.max_repairs + 1):
            try:
                return self.call_remote_model(messages, schema)
            except ProviderOutputError as exc:
                problems = exc.problems
                self.errors.append(f"{operation}: schema violation: {exc}")
                messages = messages + [{
                    "role": "user",
                    "content": "Your previous reply was invalid: " + "; ".join(problems) + ". Reply again with corrected JSON.",
                }]
        raise ProviderContractError(f"{operation}: schema violation persisted after {self.max_repairs} repairs: {problems}")

    # hooks ---------------------------------------------------------------

    def _select(self, context: InvestigationContext, candidates: list[Technique]) -> dict[str, Any]:
        prompt = json.dumps({
            "task": "select_technique",
            "instructions": (
                f"Mode is {context.mode}. Choose exactly one technique_id from candidates. Judge by "
                "new_insight, pattern_match, operationalizability (via SQL) and specificity (prefer "
                "sub-techniques). List the criteria you relied on and propose an evidence_type."
            ),
            "context": context.to_dict(),
            "candidates": [c.to_dict() for c in candidates],
        }, ensure_ascii=False)
        return self._structured("select_technique", prompt, SELECTION_SCHEMA)

    def _draft_plan(self, technique: Technique, context: InvestigationContext, feedback: list[str] | None) -> dict[str, Any]:
        task = {
            "task": "draft_plan",
            "instructions": (
                "Write an investigation plan: hypothesis, analysis_steps, read-only SQL queries, "
                "metric_definitions (extractors: cell(row,col), count_rows(), max(col), min(col), mean(col), "
                "stddev(col), ratio(a,b), share_above(col,threshold)), a rubric whose check points sum to "
                "exactly 10, pass_threshold and fail_threshold."
            ),
            "technique": technique.to_dict(),
            "context": context.to_dict(),
        }
        if feedback:
            task["previous_errors"] = feedback
        return self._structured("draft_plan", json.dumps(task, ensure_ascii=False), PLAN_SCHEMA)

    def _extract_claims(self, finding: Finding) -> list[dict[str, Any]]:
        task = {
            "task": "extract_atomic_claims",
            "instructions": (
                f"Decompose the finding into at most {self.atomic_cap} atomic claims. Each claim needs an "
                "evidence_type (quantitative_metric, temporal_pattern, content_similarity, network_structure), "
                "a strength (weak, moderate, strong) and a condition: a feature_query returning one "
                "(account_id, feature_value) row per account, a comparator (<, <=, >=, >) and a numeric threshold."
            ),
            "finding": {
                "technique_id": finding.technique_id,
                "evidence_type": finding.evidence_type,
                "hypothesis": finding.hypothesis,
                "metric_values": finding.metric_values,
                "signal_strength": finding.signal_strength,
                "status": finding.status,
                "queries": [q.query for q in finding.query_log],
            },
        }
        return self._structured("extract_atomic_claims", json.dumps(task, ensure_ascii=False), CLAIMS_SCHEMA)["claims"]
