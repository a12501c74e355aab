"""The investigation loop.

Iteration 1 records a dataset summary and nothing else.  Every later
iteration is one investigation round: pick a technique (explore or exploit),
draft and execute a plan, score it, extract atomic claims.  A round reads
everything it needs from the store and writes all of its results in a
single transaction, so the store is the only memory shared between rounds
and an interrupted round leaves no trace.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import sqlite3
import time
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from fractions import Fraction
from typing import Any, Callable

from .datastore import Store, SummaryStats
from .evidence import FindingError, build_finding, execute_plan, persist_finding
from .provider import (
    ExtractionFailure,
    FindingSummary,
    InvestigationContext,
    Provider,
    ProviderError,
)
from .taxonomy import Taxonomy, Technique, children

logger = logging.getLogger(__name__)


class UnknownRun(KeyError):
    pass


class ConfigMismatch(ValueError):
    """Resume attempted with a configuration that differs from the one the run started with."""


@dataclass
class RunConfig:
    dataset_name: str
    max_iterations: int = 15
    pass_threshold: float = 7.0
    fail_threshold_upper: float = 4.0
    explore_fraction: float = 0.5
    exploit_top_k: int = 3
    atomic_cap: int = 3
    seed: int = 0
    provider_kind: str = "scripted"
    run_id: str | None = None

    def __post_init__(self):
        if self.max_iterations < 2:
            raise ValueError("max_iterations must be at least 2")
        if not 0 <= self.fail_threshold_upper < self.pass_threshold <= 10:
            raise ValueError("need 0 <= fail_threshold_upper < pass_threshold <= 10")
        if not 0 < self.explore_fraction <= 1:
            raise ValueError("explore_fraction must lie in (0, 1]")
        if self.atomic_cap < 1 or self.exploit_top_k < 1:
            raise ValueError("atomic_cap and exploit_top_k must be positive")
        if self.provider_kind not in ("scripted", "remote"):
            raise ValueError(f"provider_kind must be scripted or remote, got {self.provider_kind!r}")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class TechniqueStats:
    times_tested: int = 0
    scores: list[float] = field(default_factory=list)

    @property
    def max_score(self) -> float | None:
        return max(self.scores) if self.scores else None

    @property
    def mean_score(self) -> float | None:
        return math.fsum(self.scores) / len(self.scores) if self.scores else None


@dataclass
class RunState:
    run_id: str
    dataset: str
    next_iteration: int
    max_iterations: int
    status: str
    config: dict[str, Any]
    config_hash: str
    technique_stats: dict[str, TechniqueStats] = field(default_factory=dict)


@dataclass
class IterationRecord:
    run_id: str
    iteration_index: int
    kind: str
    status: str
    mode: str | None = None
    technique_id: str | None = None
    finding_id: str | None = None
    claims: int = 0
    error: str | None = None


@dataclass
class RunSummary:
    run_id: str
    dataset: str
    status: str
    iterations_executed: int
    failed_iterations: int
    findings_by_status: dict[str, int]
    claims_extracted: int
    notice: str | None = None


def config_hash(config: dict[str, Any]) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def select_mode(iteration_index: int, config: RunConfig) -> str:
    """Explore for the first ``ceil(explore_fraction * rounds)`` rounds, exploit afterwards."""
    if iteration_index < 2:
        raise ValueError("modes apply to investigation rounds (iteration >= 2)")
    rounds = config.max_iterations - 1
    n_explore = math.ceil(Fraction(str(config.explore_fraction)) * rounds)
    return "explore" if iteration_index - 2 < n_explore else "exploit"


def candidate_arms(
    taxonomy: Taxonomy, stats: dict[str, TechniqueStats], mode: str, top_k: int = 3
) -> list[Technique]:
    """Candidate techniques for one round.

    Explore: techniques never tried in this run (all of them once none are
    left).  Exploit: the ``top_k`` techniques by best score plus their
    sub-techniques, best score first and then ascending id; with no scored
    history every technique is a candidate.
    """
    if len(taxonomy) == 0:
        raise ValueError("empty taxonomy")
    if mode == "explore":
        untested = [t for t in taxonomy if stats.get(t.id, TechniqueStats()).times_tested == 0]
        return untested or list(taxonomy)
    if mode != "exploit":
        raise ValueError(f"unknown mode {mode!r}")
    scored = [(s.max_score, tid) for tid, s in stats.items() if s.max_score is not None and tid in taxonomy]
    if not scored:
        return list(taxonomy)
    top = sorted(scored, key=lambda x: (-x[0], x[1]))[:top_k]
    rank: dict[str, float] = {}
    for score, tid in top:
        rank[tid] = max(rank.get(tid, score), score)
        for child in children(taxonomy, tid):
            own = stats.get(child.id)
            child_score = own.max_score if own and own.max_score is not None else score
            rank[child.id] = max(rank.get(child.id, child_score), child_score)
    return [taxonomy.techniques[t] for t in sorted(rank, key=lambda t: (-rank[t], t))]


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _dump(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


class Engine:
    """Runs iterations for runs stored in ``store``.

    ``on_commit`` is called with each :class:`IterationRecord` right after its
    transaction commits (used by interruption tests and progress display).
    """

    def __init__(
        self,
        store: Store,
        taxonomy: Taxonomy,
        provider: Provider,
        on_commit: Callable[[IterationRecord], None] | None = None,
    ):
        self.store = store
        self.taxonomy = taxonomy
        self.provider = provider
        self.on_commit = on_commit

    # run lifecycle -------------------------------------------------------

    def start_run(self, config: RunConfig, extra: dict[str, Any] | None = None) -> str:
        self.store.require_dataset(config.dataset_name)
        effective = {"run": config.to_dict(), **(extra or {})}
        digest = config_hash(effective)
        with self.store.write() as conn:
            run_id = config.run_id or f"run-{digest[:10]}"
            base, n = run_id, 1
            while conn.execute("SELECT 1 FROM runs WHERE run_id = ?", (run_id,)).fetchone():
                if config.run_id:
                    raise ValueError(f"run {run_id!r} already exists")
                n += 1
                run_id = f"{base}-{n}"
            conn.execute(
                "INSERT INTO runs VALUES (?, ?, ?, ?, 'running', 1, ?)",
                (run_id, config.dataset_name, _dump(effective), digest, config.max_iterations),
            )
        logger.info("started %s on %s", run_id, config.dataset_name)
        return run_id

    def load_state(self, run_id: str) -> RunState:
        with self.store.read() as conn:
            row = conn.execute("SELECT * FROM runs WHERE run_id = ?", (run_id,)).fetchone()
            if row is None:
                raise UnknownRun(f"unknown run {run_id!r}")
            stats: dict[str, TechniqueStats] = {}
            for tid, in conn.execute(
                "SELECT technique_id FROM iterations WHERE run_id = ? AND technique_id IS NOT NULL ORDER BY iteration_index",
                (run_id,),
            ):
                stats.setdefault(tid, TechniqueStats()).times_tested += 1
            for tid, score in conn.execute(
                "SELECT technique_id, signal_strength FROM findings WHERE run_id = ? ORDER BY iteration_index", (run_id,)
            ):
                stats.setdefault(tid, TechniqueStats()).scores.append(score)
        config = json.loads(row["config"])
        return RunState(
            run_id=run_id, dataset=row["dataset"], next_iteration=row["next_iteration"],
            max_iterations=row["max_iterations"], status=row["status"], config=config,
            config_hash=row["config_hash"], technique_stats=stats,
        )

    def run(self, run_id: str) -> RunSummary:
        state = self.load_state(run_id)
        while state.status == "running" and state.next_iteration <= state.max_iterations:
            self.run_iteration(run_id)
            state = self.load_state(run_id)
        return self.summary(run_id)

    def summary(self, run_id: str, notice: str | None = None) -> RunSummary:
        with self.store.read() as conn:
            run = conn.execute("SELECT dataset, status FROM runs WHERE run_id = ?", (run_id,)).fetchone()
            if run is None:
                raise UnknownRun(f"unknown run {run_id!r}")
            executed, failed = conn.execute(
                "SELECT COUNT(*), COALESCE(SUM(status = 'failed'), 0) FROM iterations WHERE run_id = ?", (run_id,)
            ).fetchone()
            by_status = dict(conn.execute(
                "SELECT status, COUNT(*) FROM findings WHERE run_id = ? GROUP BY status", (run_id,)
            ).fetchall())
            claims = conn.execute("SELECT COUNT(*) FROM atomic_evidence WHERE run_id = ?", (run_id,)).fetchone()[0]
        return RunSummary(
            run_id, run["dataset"], run["status"], executed, failed,
            {s: by_status.get(s, 0) for s in ("PASS", "INCONCLUSIVE", "FAIL")}, claims, notice,
        )

    # one iteration -------------------------------------------------------

    def run_iteration(self, run_id: str) -> IterationRecord:
        state = self.load_state(run_id)
        if state.status != "running":
            raise ValueError(f"run {run_id} is {state.status}")
        idx = state.next_iteration
        if idx > state.max_iterations:
            raise ValueError(f"run {run_id} has no iterations left")
        config = RunConfig.from_dict(state.config["run"])
        started_at, t0 = _now(), time.perf_counter()
        if idx == 1:
            record = self._eda(state, started_at, t0)
        else:
            record = self._round(state, config, idx, started_at, t0)
        if self.on_commit is not None:
            self.on_commit(record)
        return record

    def _finish(self, conn: sqlite3.Connection, state: RunState, idx: int) -> None:
        status = "complete" if idx >= state.max_iterations else "running"
        conn.execute(
            "UPDATE runs SET next_iteration = ?, status = ? WHERE run_id = ? AND next_iteration = ?",
            (idx + 1, status, state.run_id, idx),
        )
        if conn.execute("SELECT changes()").fetchone()[0] != 1:
            raise RuntimeError(f"run {state.run_id} advanced concurrently past iteration {idx}")

    def _eda(self, state: RunState, started_at: str, t0: float) -> IterationRecord:
        summary = self.store.dataset_summary(state.dataset)
        with self.store.write() as conn:
            conn.execute(
                "INSERT INTO iterations VALUES (?, 1, 'eda', NULL, NULL, 'completed', NULL, ?, NULL, ?, ?)",
                (state.run_id, _dump(summary.to_dict()), started_at, time.perf_counter() - t0),
            )
            self._finish(conn, state, 1)
        return IterationRecord(state.run_id, 1, "eda", "completed")

    def _context(self, state: RunState, idx: int, mode: str) -> InvestigationContext:
        with self.store.read() as conn:
            row = conn.execute(
                "SELECT artifact FROM iterations WHERE run_id = ? AND iteration_index = 1", (state.run_id,)
            ).fetchone()
            if row is None:
                raise RuntimeError(f"run {state.run_id} lacks its iteration-1 summary")
            summary = SummaryStats.from_dict(json.loads(row["artifact"]))
            history = [
                FindingSummary(r["iteration_index"], r["technique_id"], r["evidence_type"], r["signal_strength"],
                               r["fstatus"] or "ERROR")
                for r in conn.execute(
                    "SELECT i.iteration_index, i.technique_id, f.evidence_type, f.signal_strength, f.status AS fstatus "
                    "FROM iterations i LEFT JOIN findings f ON f.run_id = i.run_id AND f.iteration_index = i.iteration_index "
                    "WHERE i.run_id = ? AND i.iteration_index BETWEEN 2 AND ? ORDER BY i.iteration_index",
                    (state.run_id, idx - 1),
                )
            ]
        return InvestigationContext(state.run_id, idx, mode, summary, tuple(history))

    def _round(self, state: RunState, config: RunConfig, idx: int, started_at: str, t0: float) -> IterationRecord:
        provider = self.provider
        provider.drain()
        provider.default_pass, provider.default_fail = config.pass_threshold, config.fail_threshold_upper
        provider.atomic_cap = config.atomic_cap
        mode = select_mode(idx, config)
        context = self._context(state, idx, mode)
        candidates = candidate_arms(self.taxonomy, state.technique_stats, mode, config.exploit_top_k)

        technique_id = finding = None
        drafts = []
        errors: list[str] = []
        timings: list[float] = []
        try:
            selection = provider.select_technique(context, candidates)
            technique_id = selection.technique_id
            plan = provider.draft_plan(self.taxonomy.techniques[technique_id], context)
            with self.store.query_session(state.dataset) as qconn:
                execution = execute_plan(qconn, plan, self.store.limits)
            timings = [q.duration for q in execution.query_log]
            finding = build_finding(state.run_id, idx, plan, execution)
            try:
                drafts = provider.extract_atomic_claims(finding)
            except ExtractionFailure as exc:
                errors.append(f"extraction failure: {exc}")
            except ProviderError as exc:
                errors.append(f"extraction failure: {type(exc).__name__}: {exc}")
        except (ProviderError, FindingError) as exc:
            errors.append(f"{type(exc).__name__}: {exc}")
            logger.warning("iteration %d of %s failed: %s", idx, state.run_id, exc)
        calls, provider_errors = provider.drain()
        errors = provider_errors + errors
        status = "completed" if finding is not None else "failed"

        with self.store.write() as conn:
            conn.execute(
                "INSERT INTO iterations VALUES (?, ?, 'round', ?, ?, ?, ?, NULL, ?, ?, ?)",
                (state.run_id, idx, mode, technique_id, status, "\n".join(errors) or None,
                 _dump(timings), started_at, time.perf_counter() - t0),
            )
            if finding is not None:
                persist_finding(conn, finding, self.taxonomy)
                for n, draft in enumerate(drafts[: config.atomic_cap], start=1):
                    conn.execute(
                        "INSERT INTO atomic_evidence VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                        (f"{finding.finding_id}/a{n}", finding.finding_id, state.run_id, idx, finding.technique_id,
                         n, draft.claim_text, draft.evidence_type, draft.strength, _dump(draft.condition)),
                    )
            for call in calls:
                conn.execute(
                    "INSERT INTO provider_calls (run_id, iteration_index, provider, operation, attempt, ok, error, "
                    "prompt_tokens, completion_tokens, latency, request, response) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                    (state.run_id, idx, call.provider, call.operation, call.attempt, int(call.ok), call.error,
                     call.prompt_tokens, call.completion_tokens, call.latency, call.request, call.response),
                )
            self._finish(conn, state, idx)
        logger.info("%s iteration %d [%s] %s -> %s", state.run_id, idx, mode, technique_id,
                    finding.status if finding else "failed")
        return IterationRecord(
            state.run_id, idx, "round", status, mode, technique_id,
            finding.finding_id if finding else None, len(drafts[: config.atomic_cap]), "\n".join(errors) or None,
        )


def run_investigation(
    store: Store,
    taxonomy: Taxonomy,
    provider: Provider,
    config: RunConfig,
    extra_config: dict[str, Any] | None = None,
    on_commit: Callable[[IterationRecord], None] | None = None,
) -> RunSummary:
    engine = Engine(store, taxonomy, provider, on_commit)
    return engine.run(engine.start_run(config, extra_config))


def resume_run(
    store: Store,
    taxonomy: Taxonomy,
    provider: Provider,
    run_id: str,
    config: RunConfig | None = None,
    extra_config: dict[str, Any] | None = None,
    on_commit: Callable[[IterationRecord], None] | None = None,
) -> RunSummary:
    """Continue ``run_id`` at its next iteration.

    Passing ``config`` checks it against the configuration frozen at start.
    """
    engine = Engine(store, taxonomy, provider, on_commit)
    state = engine.load_state(run_id)
    if config is not None:
        effective = {"run": config.to_dict(), **(extra_config or {})}
        effective["run"]["run_id"] = state.config["run"].get("run_id")
        if config_hash(effective) != state.config_hash:
            raise ConfigMismatch(f"configuration differs from the one run {run_id} started with")
    if state.status != "running":
        notice = f"run {run_id} is already {state.status}; nothing to do"
        logger.info(notice)
        return engine.summary(run_id, notice=notice)
    return engine.run(run_id)
