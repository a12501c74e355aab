"""Pass-rate tables, trace chains and exported run reports."""

from __future__ import annotations

import json
import sqlite3
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Any

from .datastore import Store
from .taxonomy import Taxonomy

STRUCTURED_SCHEMA_VERSION = 1
_TABLES = ("iterations", "findings", "atomic_evidence", "verifications", "provider_calls")


class TraceError(LookupError):
    pass


def pass_rate(pass_count: int, n: int) -> float:
    """Percentage to one decimal, rounded half-up, computed in exact decimal arithmetic."""
    if n <= 0:
        raise ValueError("pass rate needs n > 0")
    pct = Decimal(100 * pass_count) / Decimal(n)
    return float(pct.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class PassRateRow:
    label: str
    n: int
    pass_count: int
    fail_count: int

    @property
    def pass_rate(self) -> float:
        return pass_rate(self.pass_count, self.n)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self) | {"pass_rate": self.pass_rate}


@dataclass
class PassRateTable:
    title: str
    rows: list[PassRateRow] = field(default_factory=list)
    notice: str | None = None

    @property
    def combined(self) -> PassRateRow | None:
        rows = [r for r in self.rows if r.n > 0]
        if not rows:
            return None
        return PassRateRow(
            "Combined", sum(r.n for r in rows), sum(r.pass_count for r in rows), sum(r.fail_count for r in rows)
        )

    @classmethod
    def from_counts(cls, title: str, counts: dict[str, tuple[int, int]]) -> "PassRateTable":
        """Build from ``{label: (pass_count, fail_count)}``."""
        return cls(title, [PassRateRow(k, p + f, p, f) for k, (p, f) in counts.items()])

    def to_dict(self) -> dict[str, Any]:
        combined = self.combined
        return {
            "title": self.title,
            "rows": [r.to_dict() for r in self.rows if r.n > 0],
            "combined": combined.to_dict() if combined else None,
            "notice": self.notice,
        }


def _latest_verifications_sql() -> str:
    return (
        "SELECT v.* FROM verifications v JOIN (SELECT atomic_evidence_id, MAX(attempt) AS attempt "
        "FROM verifications GROUP BY atomic_evidence_id) last USING (atomic_evidence_id, attempt)"
    )


def _run_label(conn: sqlite3.Connection, run_id: str) -> str:
    row = conn.execute("SELECT dataset FROM runs WHERE run_id = ?", (run_id,)).fetchone()
    if row is None:
        raise KeyError(f"unknown run {run_id!r}")
    return f"{row[0]} ({run_id})"


def atomic_pass_rate(store: Store, run_ids: list[str]) -> PassRateTable:
    """Table of claim-level outcomes, one row per run; unit = atomic claim."""
    table = PassRateTable("Atomic evidence pass rate")
    with store.read() as conn:
        for run_id in run_ids:
            label = _run_label(conn, run_id)
            p, f = conn.execute(
                f"SELECT COALESCE(SUM(status = 'PASS'), 0), COALESCE(SUM(status != 'PASS'), 0) "
                f"FROM ({_latest_verifications_sql()}) WHERE run_id = ?",
                (run_id,),
            ).fetchone()
            table.rows.append(PassRateRow(label, p + f, p, f))
    if table.combined is None:
        table.notice = "no verified claims"
    return table


def technique_pass_rate(store: Store, run_ids: list[str]) -> PassRateTable:
    """Table of round-level outcomes; a round passes when any of its verified claims passes."""
    table = PassRateTable("Technique pass rate")
    with store.read() as conn:
        for run_id in run_ids:
            label = _run_label(conn, run_id)
            rounds = conn.execute(
                f"SELECT i.iteration_index, MAX(v.status = 'PASS') FROM iterations i "
                f"LEFT JOIN atomic_evidence a ON a.run_id = i.run_id AND a.iteration_index = i.iteration_index "
                f"LEFT JOIN ({_latest_verifications_sql()}) v ON v.atomic_evidence_id = a.atomic_evidence_id "
                f"WHERE i.run_id = ? AND i.kind = 'round' GROUP BY i.iteration_index",
                (run_id,),
            ).fetchall()
            verified = conn.execute(
                f"SELECT COUNT(*) FROM ({_latest_verifications_sql()}) WHERE run_id = ?", (run_id,)
            ).fetchone()[0]
            if not verified:
                table.rows.append(PassRateRow(label, 0, 0, 0))
                continue
            p = sum(1 for _, ok in rounds if ok)
            table.rows.append(PassRateRow(label, len(rounds), p, len(rounds) - p))
    if table.combined is None:
        table.notice = "no verified claims"
    return table


@dataclass
class TraceChain:
    atomic_evidence_id: str
    claim_text: str
    condition: dict[str, Any]
    finding_id: str
    run_id: str
    dataset: str
    iteration_index: int
    technique_id: str
    technique_name: str | None
    evidence_type: str
    signal_strength: float
    finding_status: str
    plan: dict[str, Any]
    queries: list[str]
    verification: dict[str, Any] | None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def trace(store: Store, atomic_evidence_id: str, taxonomy: Taxonomy | None = None) -> TraceChain:
    """Follow a claim back to its finding, round, technique and executed queries."""
    with store.read() as conn:
        a = conn.execute("SELECT * FROM atomic_evidence WHERE atomic_evidence_id = ?", (atomic_evidence_id,)).fetchone()
        if a is None:
            raise TraceError(f"unknown atomic evidence {atomic_evidence_id!r}")
        f = conn.execute("SELECT * FROM findings WHERE finding_id = ?", (a["finding_id"],)).fetchone()
        if f is None:
            raise TraceError(f"broken link: finding {a['finding_id']} of {atomic_evidence_id} is missing")
        run = conn.execute("SELECT * FROM runs WHERE run_id = ?", (f["run_id"],)).fetchone()
        if run is None:
            raise TraceError(f"broken link: run {f['run_id']} of finding {f['finding_id']} is missing")
        it = conn.execute(
            "SELECT * FROM iterations WHERE run_id = ? AND iteration_index = ?", (f["run_id"], f["iteration_index"])
        ).fetchone()
        if it is None:
            raise TraceError(f"broken link: iteration {f['iteration_index']} of run {f['run_id']} is missing")
        if (a["run_id"], a["iteration_index"], a["technique_id"]) != (f["run_id"], f["iteration_index"], f["technique_id"]):
            raise TraceError(f"broken link: {atomic_evidence_id} disagrees with finding {f['finding_id']}")
        v = conn.execute(
            "SELECT * FROM verifications WHERE atomic_evidence_id = ? ORDER BY attempt DESC LIMIT 1", (atomic_evidence_id,)
        ).fetchone()
    technique_name = None
    if taxonomy is not None:
        tech = taxonomy.techniques.get(f["technique_id"])
        if tech is None:
            raise TraceError(f"broken link: technique {f['technique_id']} is not in the taxonomy")
        technique_name = tech.name
    return TraceChain(
        atomic_evidence_id=atomic_evidence_id,
        claim_text=a["claim_text"],
        condition=json.loads(a["condition"]),
        finding_id=f["finding_id"],
        run_id=f["run_id"],
        dataset=run["dataset"],
        iteration_index=f["iteration_index"],
        technique_id=f["technique_id"],
        technique_name=technique_name,
        evidence_type=f["evidence_type"],
        signal_strength=f["signal_strength"],
        finding_status=f["status"],
        plan=json.loads(f["plan"]),
        queries=[q["query"] for q in json.loads(f["query_log"])],
        verification=dict(v) if v else None,
    )


def _rows(conn: sqlite3.Connection, table: str, run_id: str) -> list[dict[str, Any]]:
    order = {
        "iterations": "iteration_index",
        "findings": "iteration_index",
        "atomic_evidence": "iteration_index, ordinal",
        "verifications": "atomic_evidence_id, attempt",
        "provider_calls": "call_id",
    }[table]
    return [dict(r) for r in conn.execute(f"SELECT * FROM {table} WHERE run_id = ? ORDER BY {order}", (run_id,))]


def cost_summary(store: Store, run_id: str, prices: dict[str, float] | None = None) -> dict[str, Any]:
    """Provider calls, token totals and wall time; USD only when a price table is given.

    ``prices`` holds USD per million tokens: ``{"prompt": ..., "completion": ...}``.
    """
    with store.read() as conn:
        calls, failed, prompt, completion, latency = conn.execute(
            "SELECT COUNT(*), COALESCE(SUM(ok = 0), 0), SUM(prompt_tokens), SUM(completion_tokens), "
            "COALESCE(SUM(latency), 0) FROM provider_calls WHERE run_id = ?",
            (run_id,),
        ).fetchone()
        wall = conn.execute("SELECT COALESCE(SUM(wall_time), 0) FROM iterations WHERE run_id = ?", (run_id,)).fetchone()[0]
    out = {
        "provider_calls": calls,
        "failed_calls": failed,
        "prompt_tokens": prompt,
        "completion_tokens": completion,
        "provider_latency_s": latency,
        "wall_time_s": wall,
        "usd": None,
    }
    if prices and (prompt is not None or completion is not None):
        out["usd"] = ((prompt or 0) * prices.get("prompt", 0.0) + (completion or 0) * prices.get("completion", 0.0)) / 1e6
    return out


def structured_report(store: Store, run_id: str, prices: dict[str, float] | None = None) -> dict[str, Any]:
    """Report document mirroring the store rows of one run (schema version 1)."""
    with store.read() as conn:
        run = conn.execute("SELECT * FROM runs WHERE run_id = ?", (run_id,)).fetchone()
        if run is None:
            raise KeyError(f"unknown run {run_id!r}")
        doc: dict[str, Any] = {"schema_version": STRUCTURED_SCHEMA_VERSION, "run": dict(run)}
        for table in _TABLES:
            doc[table] = _rows(conn, table, run_id)
        eda = conn.execute(
            "SELECT artifact FROM iterations WHERE run_id = ? AND iteration_index = 1", (run_id,)
        ).fetchone()
    doc["summary"] = json.loads(eda[0]) if eda and eda[0] else None
    doc["atomic_pass_rate"] = atomic_pass_rate(store, [run_id]).to_dict()
    doc["technique_pass_rate"] = technique_pass_rate(store, [run_id]).to_dict()
    doc["cost"] = cost_summary(store, run_id, prices)
    return doc


def _fmt(x: Any, spec: str = ".3g") -> str:
    if x is None:
        return "n/a"
    if isinstance(x, float):
        return format(x, spec)
    return str(x)


def markdown_report(store: Store, run_id: str, taxonomy: Taxonomy | None = None, prices: dict[str, float] | None = None) -> str:
    doc = structured_report(store, run_id, prices)
    run = doc["run"]
    out = [f"# Investigation report: {run_id}", ""]
    out += [f"Dataset `{run['dataset']}`, status **{run['status']}**, "
            f"{len(doc['iterations'])} of {run['max_iterations']} iterations recorded.", ""]

    out += ["## Dataset summary", ""]
    s = doc["summary"]
    if s:
        out += [
            f"- messages: {s['message_count']}",
            f"- accounts: {s['account_count']} (positive {s['labeled_positive_count']}, "
            f"negative {s['labeled_negative_count']}, unlabeled {s['unlabeled_count']})",
            f"- time range: {s['time_range'][0]} to {s['time_range'][1]}",
            "- messages by type: " + ", ".join(f"{k} {v}" for k, v in s["messages_by_type"].items()),
            "",
        ]
    else:
        out += ["_no summary recorded_", ""]

    out += ["## Atomic evidence pass rate", "", _table_md(doc["atomic_pass_rate"])]
    out += ["## Technique pass rate", "", _table_md(doc["technique_pass_rate"])]

    out += ["## Investigation rounds", "", "| Iter | Mode | Technique | Evidence type | Score | Status |",
            "|---:|---|---|---|---:|---|"]
    findings = {f["iteration_index"]: f for f in doc["findings"]}
    for it in doc["iterations"]:
        if it["kind"] != "round":
            continue
        f = findings.get(it["iteration_index"])
        name = ""
        if taxonomy is not None and it["technique_id"] in taxonomy:
            name = f" {taxonomy.techniques[it['technique_id']].name}"
        tech = f"{it['technique_id']}{name}" if it["technique_id"] else "-"
        if f:
            out.append(f"| {it['iteration_index']} | {it['mode']} | {tech} | {f['evidence_type']} | "
                       f"{f['signal_strength']:.1f} | {f['status']} |")
        else:
            out.append(f"| {it['iteration_index']} | {it['mode']} | {tech} | - | - | iteration failed |")
    out.append("")

    out += ["## Verification results", ""]
    claims = {a["atomic_evidence_id"]: a for a in doc["atomic_evidence"]}
    latest: dict[str, dict[str, Any]] = {}
    for v in doc["verifications"]:
        latest[v["atomic_evidence_id"]] = v
    for status in ("PASS", "FAIL"):
        out += [f"### {status}", ""]
        rows = [v for v in latest.values() if v["status"] == status]
        if not rows:
            out += ["_none_", ""]
            continue
        out += ["| Claim | Technique | TP | FP | FN | TN | OR | p | Note |", "|---|---|---:|---:|---:|---:|---:|---:|---|"]
        for v in rows:
            a = claims.get(v["atomic_evidence_id"], {})
            odds = _fmt(v["odds_ratio"]) + ("*" if v["or_corrected"] else "")
            text = a.get("claim_text", "").replace("|", "/")
            out.append(
                f"| {v['atomic_evidence_id']}: {text} | {a.get('technique_id', '')} | {_fmt(v['tp'])} | {_fmt(v['fp'])} | "
                f"{_fmt(v['fn'])} | {_fmt(v['tn'])} | {odds} | {_fmt(v['p_value'])} | {v['note'] or ''} |"
            )
        out.append("")
    unverified = [a for a in claims if a not in latest]
    if unverified:
        out += [f"{len(unverified)} claim(s) not yet verified.", ""]
    out += ["`*` odds ratio computed with +0.5 added to every cell (zero cell present).", ""]

    c = doc["cost"]
    out += ["## Cost", "",
            f"- provider calls: {c['provider_calls']} ({c['failed_calls']} failed)",
            f"- tokens: prompt {_fmt(c['prompt_tokens'])}, completion {_fmt(c['completion_tokens'])}",
            f"- provider latency: {c['provider_latency_s']:.3f} s",
            f"- wall time: {c['wall_time_s']:.3f} s",
            f"- cost: {'USD %.2f' % c['usd'] if c['usd'] is not None else 'n/a (no token pricing)'}",
            ""]
    return "\n".join(out)


def _table_md(table: dict[str, Any]) -> str:
    if table["combined"] is None:
        return f"_{table['notice'] or 'no verified claims'}_\n"
    lines = ["| Dataset | N | Pass Rate | PASS | FAIL |", "|---|---:|---:|---:|---:|"]
    for r in [*table["rows"], table["combined"]]:
        lines.append(f"| {r['label']} | {r['n']} | {r['pass_rate']:.1f}% | {r['pass_count']} | {r['fail_count']} |")
    return "\n".join(lines) + "\n"


def export_report(
    store: Store, run_id: str, format: str = "markdown", taxonomy: Taxonomy | None = None,
    prices: dict[str, float] | None = None,
) -> str:
    """Render a run as markdown or as structured JSON text."""
    with store.read() as conn:
        row = conn.execute("SELECT status FROM runs WHERE run_id = ?", (run_id,)).fetchone()
    if row is None:
        raise KeyError(f"unknown run {run_id!r}")
    if format == "markdown":
        return markdown_report(store, run_id, taxonomy, prices)
    if format == "structured":
        return json.dumps(structured_report(store, run_id, prices), indent=2, ensure_ascii=False, sort_keys=True)
    raise ValueError(f"unknown report format {format!r}")
