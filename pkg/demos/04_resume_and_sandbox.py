"""
Crashing a run, resuming it, and poking the query sandbox
=========================================================

Each iteration commits in one transaction, so a process killed between
iterations leaves a consistent store.  Resuming replays nothing and yields
the same tables as a run that never stopped.
"""

import os
import subprocess
import sys
import tempfile
import textwrap
from pathlib import Path

from disarmlab import DatasetManifest, RunConfig, Store, resume_run, run_investigation
from disarmlab.provider import ScriptedProvider
from disarmlab.sandbox import SandboxError
from disarmlab.synth import china_like_spec, generate_campaign
from disarmlab.taxonomy import default_taxonomy_path, load_taxonomy

work = Path(tempfile.mkdtemp(prefix="disarmlab-resume-"))
spec = china_like_spec(positive_accounts=60, negative_accounts=40, positive_messages=3000, negative_messages=800,
                       patterns=[{"kind": "duplicate_comments", "rate": 0.3}], dataset_name="small")
files = generate_campaign(spec, work / "data")
taxonomy = load_taxonomy(default_taxonomy_path())


def fresh_store(name):
    store = Store(work / name)
    store.ingest_dataset(DatasetManifest.load(files.manifest), files.accounts, files.messages)
    return store


reference = fresh_store("reference.db")
run_investigation(reference, taxonomy, ScriptedProvider(taxonomy), RunConfig(dataset_name="small"))

# Run in a child process that hard-exits right after iteration 6 commits.
killed = fresh_store("killed.db")
child = textwrap.dedent("""
    import os, sys
    from disarmlab import RunConfig, Store, run_investigation, load_taxonomy
    from disarmlab.provider import ScriptedProvider
    from disarmlab.taxonomy import default_taxonomy_path
    tax = load_taxonomy(default_taxonomy_path())
    def stop(record):
        if record.iteration_index == 6:
            os._exit(9)
    run_investigation(Store(sys.argv[1]), tax, ScriptedProvider(tax), RunConfig(dataset_name="small"), on_commit=stop)
""")
print("child exit status:", subprocess.run([sys.executable, "-c", child, os.fspath(killed.path)]).returncode)

with killed.read() as conn:
    run_id, next_iteration, status = conn.execute("SELECT run_id, next_iteration, status FROM runs").fetchone()
print(run_id, "stopped before iteration", next_iteration, status)
print(resume_run(killed, taxonomy, ScriptedProvider(taxonomy), run_id))

for table in ("findings", "atomic_evidence"):
    with reference.read() as a, killed.read() as b:
        same = [tuple(r) for r in a.execute(f"SELECT * FROM {table} ORDER BY 1")] == \
               [tuple(r) for r in b.execute(f"SELECT * FROM {table} ORDER BY 1")]
    print(table, "identical" if same else "DIFFERENT")

# Queries run through a lexical gate and then a read-only, authorizer-guarded connection.
for sql in ["SELECT COUNT(*) FROM messages", "DELETE FROM messages", "SELECT 1; DROP TABLE accounts",
            "ATTACH DATABASE 'x.db' AS x", "SELECT * FROM main.accounts"]:
    try:
        print("ok     ", sql, killed.run_readonly_query("small", sql).rows)
    except SandboxError as exc:
        print("refused", sql, "->", exc)
