import json
import sqlite3

import pytest

from conftest import ingest_files
from disarmlab.engine import RunConfig, run_investigation
from disarmlab.provider import ScriptedProvider
from disarmlab.report import (
    PassRateTable,
    TraceError,
    atomic_pass_rate,
    cost_summary,
    export_report,
    pass_rate,
    technique_pass_rate,
    trace,
)
from disarmlab.verifier import verify_run


@pytest.mark.parametrize(
    "k,n,expected",
    [(16, 42, 38.1), (8, 42, 19.0), (24, 84, 28.6), (9, 14, 64.3), (5, 14, 35.7), (14, 28, 50.0), (0, 1, 0.0),
     (1, 8, 12.5), (1, 16, 6.3), (3, 16, 18.8)],
)
def test_pass_rate_rounding(k, n, expected):
    assert pass_rate(k, n) == expected


def test_pass_rate_needs_claims():
    with pytest.raises(ValueError):
        pass_rate(0, 0)


def test_combined_row():
    table = PassRateTable.from_counts("t", {"a": (16, 26), "b": (8, 34)})
    c = table.combined
    assert (c.n, c.pass_count, c.pass_rate) == (84, 24, 28.6)
    assert PassRateTable.from_counts("t", {"a": (0, 0)}).combined is None


@pytest.fixture(scope="module")
def verified(small_files, tmp_path_factory, taxonomy):
    store = ingest_files(small_files, tmp_path_factory.mktemp("rep") / "r.db")
    summary = run_investigation(store, taxonomy, ScriptedProvider(taxonomy), RunConfig(dataset_name="small"))
    verify_run(store, summary.run_id)
    return store, summary.run_id


def test_pass_rates_match_verification_rows(verified):
    store, run_id = verified
    with store.read() as conn:
        statuses = [r[0] for r in conn.execute("SELECT status FROM verifications WHERE run_id = ?", (run_id,))]
        rounds = conn.execute(
            "SELECT i.iteration_index, MAX(v.status = 'PASS') FROM iterations i "
            "LEFT JOIN atomic_evidence a USING (run_id, iteration_index) "
            "LEFT JOIN verifications v USING (atomic_evidence_id) "
            "WHERE i.run_id = ? AND i.kind = 'round' GROUP BY i.iteration_index", (run_id,)
        ).fetchall()
    row = atomic_pass_rate(store, [run_id]).rows[0]
    assert (row.n, row.pass_count) == (len(statuses), statuses.count("PASS"))
    trow = technique_pass_rate(store, [run_id]).rows[0]
    assert trow.n == 14 == len(rounds)
    assert trow.pass_count == sum(1 for _, ok in rounds if ok)
    assert row.pass_count > 0


def test_all_fail_round_counts_as_fail(small_files, tmp_path, taxonomy):
    store = ingest_files(small_files, tmp_path / "fail.db")
    summary = run_investigation(store, taxonomy, ScriptedProvider(taxonomy), RunConfig(dataset_name="small", max_iterations=3))
    assert technique_pass_rate(store, [summary.run_id]).notice == "no verified claims"
    results = verify_run(store, summary.run_id)
    table = technique_pass_rate(store, [summary.run_id])
    per_round: dict[int, list[str]] = {}
    for r in results:
        per_round.setdefault(int(r.atomic_evidence_id.split("/i")[1][:2]), []).append(r.status)
    expected_fail = sum(1 for s in per_round.values() if "PASS" not in s) + (2 - len(per_round))
    assert table.rows[0].fail_count == expected_fail


def test_trace_chain(verified, taxonomy):
    store, run_id = verified
    with store.read() as conn:
        aid = conn.execute("SELECT atomic_evidence_id FROM atomic_evidence WHERE run_id = ? AND iteration_index = 5",
                           (run_id,)).fetchone()[0]
    chain = trace(store, aid, taxonomy)
    assert chain.run_id == run_id and chain.dataset == "small"
    assert aid.startswith(chain.finding_id) and chain.iteration_index == 5
    assert chain.technique_name == taxonomy.techniques[chain.technique_id].name
    assert chain.queries and chain.verification["status"] in {"PASS", "FAIL"}
    with pytest.raises(TraceError):
        trace(store, "no-such-claim")


def _tamper(store, *statements):
    conn = sqlite3.connect(store.path)
    for table in ("findings", "atomic_evidence"):
        for op in ("update", "delete"):
            conn.execute(f"DROP TRIGGER IF EXISTS {table}_no_{op}")
    for s in statements:
        conn.execute(*s)
    conn.commit()
    conn.close()


def test_trace_detects_deleted_finding(small_files, tmp_path, taxonomy):
    store = ingest_files(small_files, tmp_path / "t.db")
    run_investigation(store, taxonomy, ScriptedProvider(taxonomy), RunConfig(dataset_name="small", max_iterations=3))
    with store.read() as conn:
        aid, fid = conn.execute("SELECT atomic_evidence_id, finding_id FROM atomic_evidence LIMIT 1").fetchone()
    with pytest.raises(sqlite3.DatabaseError, match="immutable"):
        with store.write() as conn:
            conn.execute("DELETE FROM findings WHERE finding_id = ?", (fid,))
    _tamper(store, ("DELETE FROM findings WHERE finding_id = ?", (fid,)))
    with pytest.raises(TraceError, match=fid):
        trace(store, aid)


def test_trace_detects_tampered_technique(small_files, tmp_path, taxonomy):
    store = ingest_files(small_files, tmp_path / "t.db")
    run_investigation(store, taxonomy, ScriptedProvider(taxonomy), RunConfig(dataset_name="small", max_iterations=3))
    with store.read() as conn:
        aid = conn.execute("SELECT atomic_evidence_id FROM atomic_evidence LIMIT 1").fetchone()[0]
    _tamper(store, ("UPDATE atomic_evidence SET technique_id = 'T9999' WHERE atomic_evidence_id = ?", (aid,)))
    with pytest.raises(TraceError, match="disagrees"):
        trace(store, aid)


def test_cost_summary(verified):
    store, run_id = verified
    c = cost_summary(store, run_id)
    assert c["wall_time_s"] > 0 and c["provider_calls"] >= 14 and c["usd"] is None
    priced = cost_summary(store, run_id, {"prompt": 1.0, "completion": 2.0})
    if c["prompt_tokens"] is None and c["completion_tokens"] is None:
        assert priced["usd"] is None


def test_structured_export_mirrors_store(verified):
    store, run_id = verified
    doc = json.loads(export_report(store, run_id, "structured"))
    assert doc["schema_version"] == 1
    with store.read() as conn:
        for table, key in (("findings", "finding_id"), ("atomic_evidence", "atomic_evidence_id")):
            rows = {r[key]: dict(r) for r in conn.execute(f"SELECT * FROM {table} WHERE run_id = ?", (run_id,))}
            assert {r[key]: r for r in doc[table]} == rows
        n_ver = conn.execute("SELECT COUNT(*) FROM verifications WHERE run_id = ?", (run_id,)).fetchone()[0]
    assert len(doc["verifications"]) == n_ver
    assert doc["summary"]["message_count"] == 3800


def test_markdown_sections(verified, taxonomy):
    store, run_id = verified
    md = export_report(store, run_id, "markdown", taxonomy)
    headings = [line for line in md.splitlines() if line.startswith("## ")]
    assert headings == [
        "## Dataset summary", "## Atomic evidence pass rate", "## Technique pass rate",
        "## Investigation rounds", "## Verification results", "## Cost",
    ]
    assert "### PASS" in md and "### FAIL" in md and "| Combined |" in md


def test_markdown_without_verifications(small_files, tmp_path, taxonomy):
    store = ingest_files(small_files, tmp_path / "m.db")
    run_id = run_investigation(store, taxonomy, ScriptedProvider(taxonomy), RunConfig(dataset_name="small", max_iterations=2)).run_id
    md = export_report(store, run_id)
    assert md.count("_none_") == 2 and "_no verified claims_" in md and "not yet verified" in md


def test_unknown_run_and_format(verified):
    store, run_id = verified
    with pytest.raises(KeyError):
        export_report(store, "run-nope")
    with pytest.raises(ValueError):
        export_report(store, run_id, "pdf")
