"""Technique-grounded investigation of coordinated inauthentic behaviour.

Typical flow: ingest a labeled dataset into a :class:`Store`, run the
explore/exploit investigation loop, verify the extracted atomic claims
against ground-truth labels, then export a report.
"""

from .datastore import DatasetManifest, Store, dataset_summary, ingest_dataset, run_readonly_query
from .engine import RunConfig, resume_run, run_investigation
from .report import export_report, trace
from .taxonomy import load_taxonomy
from .verifier import verify_run

__version__ = "0.1.0"

__all__ = [
    "DatasetManifest", "RunConfig", "Store", "dataset_summary", "export_report", "ingest_dataset",
    "load_taxonomy", "resume_run", "run_investigation", "run_readonly_query", "trace", "verify_run",
]
