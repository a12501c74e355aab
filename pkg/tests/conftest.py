import json
from pathlib import Path

import pytest

from disarmlab.datastore import DatasetManifest, Store
from disarmlab.synth import CampaignSpec, china_like_spec, generate_campaign
from disarmlab.taxonomy import default_taxonomy_path, load_taxonomy


@pytest.fixture(scope="session")
def taxonomy():
    return load_taxonomy(default_taxonomy_path())


def write_jsonl(path: Path, rows) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def make_store(tmp_path: Path, accounts, messages, name="tiny", platform="microblog",
               time_range=("2018-01-01T00:00:00Z", "2019-12-31T23:59:59Z"), store_name="store.db") -> Store:
    """Ingest in-memory rows into a fresh store under ``tmp_path``."""
    manifest = DatasetManifest(name, platform, time_range, len(accounts), len(messages), "test fixture")
    store = Store(tmp_path / store_name)
    store.ingest_dataset(
        manifest,
        write_jsonl(tmp_path / f"{name}_accounts.jsonl", accounts),
        write_jsonl(tmp_path / f"{name}_messages.jsonl", messages),
    )
    return store


def ingest_files(files, store_path) -> Store:
    store = Store(store_path)
    store.ingest_dataset(DatasetManifest.load(files.manifest), files.accounts, files.messages)
    return store


@pytest.fixture(scope="session")
def china_files(tmp_path_factory):
    return generate_campaign(china_like_spec(), tmp_path_factory.mktemp("china"))


@pytest.fixture(scope="session")
def china_null_files(tmp_path_factory):
    return generate_campaign(china_like_spec(planted=False), tmp_path_factory.mktemp("china_null"))


@pytest.fixture
def china_store(china_files, tmp_path):
    return ingest_files(china_files, tmp_path / "china.db")


def small_spec(**overrides):
    """A scaled-down planted campaign for fast engine runs."""
    kw = dict(
        dataset_name="small", positive_accounts=60, negative_accounts=40,
        positive_messages=3000, negative_messages=800,
        patterns=[
            {"kind": "creation_burst", "window": ["2018-08-01T00:00:00Z", "2018-09-01T00:00:00Z"],
             "size": 20, "share_positive": 0.95},
            {"kind": "duplicate_comments", "rate": 0.3, "min_length": 40},
        ],
    )
    base = china_like_spec().to_dict()
    base.update(kw, **overrides)
    return CampaignSpec.from_dict(base)


@pytest.fixture(scope="session")
def small_files(tmp_path_factory):
    return generate_campaign(small_spec(), tmp_path_factory.mktemp("small"))


def table_dump(store: Store, table: str) -> str:
    """Canonical text of a table, for byte-level comparison between stores."""
    with store.read() as conn:
        cols = [d[0] for d in conn.execute(f"SELECT * FROM {table} LIMIT 0").description]
        rows = conn.execute(f"SELECT * FROM {table} ORDER BY 1, 2").fetchall()
    return json.dumps([cols] + [list(r) for r in rows], sort_keys=True)


# Acceptance criteria outcomes, filled by test_acceptance and echoed after the run.
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{status} criterion {n}: {detail}")
