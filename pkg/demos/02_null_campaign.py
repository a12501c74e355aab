"""
The same playbook on a campaign with nothing planted
====================================================

A null campaign keeps the account counts and the total volume but spreads
creation dates and messages uniformly.  Claims still get made (the playbook
always finds a busiest month), yet none of them should survive verification.
"""

import tempfile
from pathlib import Path

from disarmlab import DatasetManifest, RunConfig, Store, run_investigation, verify_run
from disarmlab.provider import ScriptedProvider
from disarmlab.report import atomic_pass_rate, technique_pass_rate
from disarmlab.synth import china_like_spec, generate_campaign, null_fraction_significant
from disarmlab.taxonomy import default_taxonomy_path, load_taxonomy

work = Path(tempfile.mkdtemp(prefix="disarmlab-null-"))
files = generate_campaign(china_like_spec(planted=False), work / "data")
store = Store(work / "store.db")
store.ingest_dataset(DatasetManifest.load(files.manifest), files.accounts, files.messages)

taxonomy = load_taxonomy(default_taxonomy_path())
summary = run_investigation(store, taxonomy, ScriptedProvider(taxonomy), RunConfig(dataset_name="china_like"))
results = verify_run(store, summary.run_id)

for r in results:
    print(r.atomic_evidence_id, r.status, r.matrix.as_tuple() if r.matrix else None, r.p_value)

print(atomic_pass_rate(store, [summary.run_id]).to_dict()["combined"])
print(technique_pass_rate(store, [summary.run_id]).to_dict()["combined"])

# How often does chance alone make the canonical burst condition significant?
print("false-positive rate over 20 seeds:", null_fraction_significant(range(20), total_messages=500))
