import json

import pytest

from conftest import ingest_files, make_store, write_jsonl
from disarmlab.datastore import DatasetManifest, IngestError, Store, UnknownDataset, parse_timestamp
from disarmlab.synth import build_campaign, moldova_like_spec, write_campaign

ACCOUNTS = [
    {"account_id": "a1", "created_at": "2018-05-01T00:00:00Z", "label": "positive"},
    {"account_id": "a2", "created_at": "2018-06-01T00:00:00Z", "label": "negative"},
]


def _manifest(n_acc=None, n_msg=None, **kw):
    return DatasetManifest("tiny", "microblog", ("2019-01-01T00:00:00Z", "2019-12-31T00:00:00Z"), n_acc, n_msg, "t", **kw)


def test_china_counts(china_files, tmp_path):
    store = ingest_files(china_files, tmp_path / "s.db")
    summary = store.dataset_summary("china_like")
    assert summary.message_count == 40_863
    assert summary.account_count == 774
    assert summary.labeled_positive_count == 617
    assert summary.labeled_negative_count == 157


def test_china_ingest_report(china_files, tmp_path):
    report = Store(tmp_path / "s.db").ingest_dataset(
        DatasetManifest.load(china_files.manifest), china_files.accounts, china_files.messages
    )
    assert report.messages_accepted == 40_863
    assert (report.labeled_positive, report.labeled_negative) == (617, 157)
    assert report.rejected == []


def test_empty_messages_file(tmp_path):
    store = Store(tmp_path / "s.db")
    report = store.ingest_dataset(_manifest(2, 0), write_jsonl(tmp_path / "a.jsonl", ACCOUNTS), write_jsonl(tmp_path / "m.jsonl", []))
    assert report.messages_accepted == 0
    summary = store.dataset_summary("tiny")
    assert summary.message_count == 0 and summary.time_range == (None, None)


def test_unknown_account_rejected(tmp_path):
    msgs = [
        {"message_id": "m1", "account_id": "a1", "timestamp": "2019-02-01T10:00:00Z", "text": "hi"},
        {"message_id": "m2", "account_id": "ghost", "timestamp": "2019-02-01T10:00:00Z", "text": "boo"},
    ]
    store = Store(tmp_path / "s.db")
    report = store.ingest_dataset(_manifest(), write_jsonl(tmp_path / "a.jsonl", ACCOUNTS), write_jsonl(tmp_path / "m.jsonl", msgs))
    assert report.messages_accepted == 1
    [rej] = report.rejected
    assert rej.row_id == "m2" and rej.reason == "unknown account"


@pytest.mark.parametrize(
    "msg, reason",
    [
        ({"message_id": "m1", "account_id": "a1", "timestamp": "yesterday"}, "unparseable timestamp"),
        ({"message_id": "m1", "account_id": "a1", "timestamp": "2015-01-01T00:00:00Z"}, "timestamp outside declared range"),
    ],
)
def test_bad_rows_rejected_with_reason(tmp_path, msg, reason):
    report = Store(tmp_path / "s.db").ingest_dataset(
        _manifest(), write_jsonl(tmp_path / "a.jsonl", ACCOUNTS), write_jsonl(tmp_path / "m.jsonl", [msg])
    )
    assert [r.reason for r in report.rejected] == [reason]


def test_duplicate_message_rejected(tmp_path):
    m = {"message_id": "m1", "account_id": "a1", "timestamp": "2019-02-01T10:00:00Z", "text": "x"}
    report = Store(tmp_path / "s.db").ingest_dataset(
        _manifest(), write_jsonl(tmp_path / "a.jsonl", ACCOUNTS), write_jsonl(tmp_path / "m.jsonl", [m, m])
    )
    assert report.messages_accepted == 1
    assert report.rejected[0].reason == "duplicate message_id"


def test_declared_count_mismatch_aborts_without_writing(tmp_path):
    store = Store(tmp_path / "s.db")
    with pytest.raises(IngestError, match="declared account count"):
        store.ingest_dataset(_manifest(3, 0), write_jsonl(tmp_path / "a.jsonl", ACCOUNTS), write_jsonl(tmp_path / "m.jsonl", []))
    assert store.datasets() == []


def test_missing_mapped_column(tmp_path):
    acc = tmp_path / "a.csv"
    acc.write_text("id,label\na1,positive\n")
    msg = tmp_path / "m.csv"
    msg.write_text("message_id,account_id,timestamp\n")
    with pytest.raises(IngestError, match="account_id"):
        Store(tmp_path / "s.db").ingest_dataset(_manifest(), acc, msg)
    store = Store(tmp_path / "s2.db")
    store.ingest_dataset(_manifest(account_columns={"account_id": "id"}), acc, msg)
    assert store.labeled_accounts("tiny") == {"a1": "positive"}


def test_urls_stripped_and_counted(tmp_path):
    msgs = [{"message_id": "m1", "account_id": "a1", "timestamp": "2019-02-01T10:00:00Z",
             "text": "see https://a.example/x and http://b.example #Tag @someone"}]
    store = make_store(tmp_path, ACCOUNTS, msgs, time_range=("2019-01-01T00:00:00Z", "2019-12-31T00:00:00Z"))
    t = store.run_readonly_query("tiny", "SELECT text, link_count, hashtags, mentions FROM messages")
    text, links, tags, mentions = t.rows[0]
    assert "http" not in text and links == 2
    assert json.loads(tags) == ["Tag"] and json.loads(mentions) == ["someone"]


def test_singleton_time_range(tmp_path):
    msgs = [{"message_id": "m1", "account_id": "a1", "timestamp": "2019-02-01T10:00:00Z"}]
    store = make_store(tmp_path, ACCOUNTS, msgs, time_range=("2019-01-01T00:00:00Z", "2019-12-31T00:00:00Z"))
    lo, hi = store.dataset_summary("tiny").time_range
    assert lo == hi == "2019-02-01 10:00:00"


def test_moldova_scaled_account_count_matches_manifest(tmp_path):
    ds = build_campaign(moldova_like_spec(scale=0.02))
    files = write_campaign(ds, tmp_path / "md")
    declared = json.loads(files.manifest.read_text())["expected_account_count"]
    assert declared == round(30_297 * 0.02)
    summary = ingest_files(files, tmp_path / "s.db").dataset_summary("moldova_like")
    assert summary.account_count == declared
    assert summary.unlabeled_count > 0 and summary.platform == "messaging_channel"


def test_reingest_replaces_atomically(tmp_path):
    msgs = [{"message_id": "m1", "account_id": "a1", "timestamp": "2019-02-01T10:00:00Z"}]
    store = make_store(tmp_path, ACCOUNTS, msgs, time_range=("2019-01-01T00:00:00Z", "2019-12-31T00:00:00Z"))
    store.ingest_dataset(_manifest(), write_jsonl(tmp_path / "a.jsonl", ACCOUNTS[:1]), write_jsonl(tmp_path / "m.jsonl", []))
    s = store.dataset_summary("tiny")
    assert (s.account_count, s.message_count) == (1, 0)


def test_unknown_dataset(tmp_path):
    with pytest.raises(UnknownDataset):
        Store(tmp_path / "s.db").dataset_summary("nope")


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("2019-02-01T10:00:00Z", "2019-02-01 10:00:00"),
        ("2019-02-01T12:00:00+02:00", "2019-02-01 10:00:00"),
        (0, "1970-01-01 00:00:00"),
        ("1549015200", "2019-02-01 10:00:00"),
        ("not a date", None),
        (None, None),
    ],
)
def test_parse_timestamp(raw, expected):
    assert parse_timestamp(raw) == expected
