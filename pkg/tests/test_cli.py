import json
import subprocess
import sys

import pytest

from conftest import table_dump
from disarmlab.cli import dispatch
from disarmlab.datastore import Store


def cli(*argv):
    return dispatch([str(a) for a in argv])


def test_help_lists_subcommands(capsys):
    assert cli("--help") == 0
    out = capsys.readouterr().out
    for name in ("ingest", "run", "resume", "verify", "report", "synth", "trace", "taxonomy-check"):
        assert name in out


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "disarmlab.cli", "run", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "--auto-verify" in proc.stdout


@pytest.mark.parametrize(
    "argv",
    [["frobnicate"], ["run", "--bogus"], ["report"], ["synth", "--out", "x"]],
)
def test_bad_arguments_exit_1(argv, capsys):
    assert cli(*argv) == 1


def test_taxonomy_check(capsys, tmp_path):
    assert cli("taxonomy-check") == 0
    assert json.loads(capsys.readouterr().out)["techniques"] > 0
    bad = tmp_path / "tax.json"
    bad.write_text('{"version": "x", "techniques": [{"id": "T0049.001", "name": "orphan"}]}')
    assert cli("taxonomy-check", "--taxonomy", bad) == 1


def test_missing_config_and_dataset(tmp_path, capsys):
    assert cli("run", "--config", tmp_path / "nope.json") == 1
    assert cli("run", "--store", tmp_path / "s.db") == 1
    assert "dataset" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset_name": "x", "colour": "blue"}))
    assert cli("run", "--config", cfg) == 1
    assert "colour" in capsys.readouterr().err


def test_missing_credentials_names_variable(small_files, tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("DISARMLAB_API_KEY", raising=False)
    store = tmp_path / "s.db"
    assert cli("ingest", "--store", store, "--manifest", small_files.manifest,
               "--accounts", small_files.accounts, "--messages", small_files.messages) == 0
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset_name": "small", "provider": {"kind": "remote", "endpoint": "http://127.0.0.1:9", "model": "m"}}))
    capsys.readouterr()
    assert cli("run", "--config", cfg, "--store", store) == 1
    assert "DISARMLAB_API_KEY" in capsys.readouterr().err


def test_unknown_run_and_claim(tmp_path, capsys):
    store = tmp_path / "s.db"
    assert cli("verify", "--store", store, "--run-id", "run-missing") == 1
    assert cli("report", "--store", store, "--run-id", "run-missing") == 1
    assert cli("resume", "--store", store, "--run-id", "run-missing") == 1
    assert cli("trace", "--store", store, "--id", "run-missing/i02/a1") == 1


def _ingest(files, store):
    assert cli("ingest", "--store", store, "--manifest", files.manifest,
               "--accounts", files.accounts, "--messages", files.messages) == 0


@pytest.mark.slow
def test_full_sequence(tmp_path, capsys):
    data = tmp_path / "data"
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "dataset_name": "cli_demo", "positive_accounts": 30, "negative_accounts": 20,
        "positive_messages": 1200, "negative_messages": 300, "seed": 5,
        "patterns": [{"kind": "duplicate_comments", "rate": 0.3, "min_length": 40}],
    }))
    assert cli("synth", "--spec", spec, "--out", data) == 0
    files = json.loads(capsys.readouterr().out)
    store = tmp_path / "s.db"
    assert cli("ingest", "--store", store, "--manifest", files["manifest"],
               "--accounts", files["accounts"], "--messages", files["messages"]) == 0
    assert json.loads(capsys.readouterr().out)["messages_accepted"] == 1500
    assert cli("run", "--store", store, "--dataset", "cli_demo", "--max-iterations", 6) == 0
    run = json.loads(capsys.readouterr().out)["run"]
    assert run["status"] == "complete" and run["iterations_executed"] == 6
    assert cli("verify", "--store", store, "--run-id", run["run_id"]) == 0
    verified = json.loads(capsys.readouterr().out)
    assert verified["verified"] == run["claims_extracted"]
    out = tmp_path / "report.json"
    assert cli("report", "--store", store, "--run-id", run["run_id"], "--format", "structured", "--out", out) == 0
    doc = json.loads(out.read_text())
    assert doc["run"]["run_id"] == run["run_id"] and len(doc["verifications"]) == verified["verified"]
    aid = doc["atomic_evidence"][0]["atomic_evidence_id"]
    capsys.readouterr()
    assert cli("trace", "--store", store, "--id", aid) == 0
    assert json.loads(capsys.readouterr().out)["run_id"] == run["run_id"]
    assert cli("resume", "--store", store, "--run-id", run["run_id"]) == 0
    assert "complete" in capsys.readouterr().err


@pytest.mark.slow
def test_auto_flags_compose(small_files, tmp_path, capsys):
    a, b = tmp_path / "a.db", tmp_path / "b.db"
    _ingest(small_files, a)
    _ingest(small_files, b)
    assert cli("run", "--store", a, "--dataset", "small", "--auto-verify", "--auto-report",
               "--out", tmp_path / "a.md") == 0
    assert cli("run", "--store", b, "--dataset", "small") == 0
    capsys.readouterr()
    with Store(b).read() as conn:
        run_id = conn.execute("SELECT run_id FROM runs").fetchone()[0]
    assert cli("verify", "--store", b, "--run-id", run_id) == 0
    assert cli("report", "--store", b, "--run-id", run_id, "--out", tmp_path / "b.md") == 0
    for t in ("findings", "atomic_evidence", "verifications"):
        assert table_dump(Store(a), t) == table_dump(Store(b), t)
    strip = lambda p: [l for l in p.read_text().splitlines() if "wall time" not in l and "latency" not in l]
    assert strip(tmp_path / "a.md") == strip(tmp_path / "b.md")


def test_auto_report_needs_out(tmp_path):
    assert cli("run", "--store", tmp_path / "s.db", "--dataset", "x", "--auto-report") == 1
