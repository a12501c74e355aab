import json

import pytest

from conftest import ingest_files, make_store
from disarmlab.plans import AtomicClaimDraft
from disarmlab.stats import ConfusionMatrix
from disarmlab.synth import build_campaign, china_like_spec, write_campaign
from disarmlab.verifier import (
    ConditionError,
    DegenerateLabels,
    apply_condition,
    build_confusion,
    compile_condition,
    verdict,
    verify_claim,
)

# 10 positive accounts each post 3 messages; 10 negatives post 1.
ACCOUNTS = [{"account_id": f"p{i}", "label": "positive"} for i in range(10)] + [
    {"account_id": f"n{i}", "label": "negative"} for i in range(10)
] + [{"account_id": "u0", "label": "unlabeled"}]
MESSAGES = [
    {"message_id": f"{a['account_id']}-{k}", "account_id": a["account_id"], "timestamp": "2019-03-01T10:00:00Z"}
    for a in ACCOUNTS
    for k in range(3 if a["label"] != "negative" else 1)
]
VOLUME = "SELECT account_id, COUNT(*) AS n FROM messages GROUP BY account_id"


@pytest.fixture
def store(tmp_path):
    return make_store(tmp_path, ACCOUNTS, MESSAGES)


def _cond(threshold, comparator=">", query=VOLUME):
    return compile_condition({"feature_query": query, "comparator": comparator, "threshold": threshold})


def test_compile_from_draft():
    draft = AtomicClaimDraft.from_dict({
        "claim_text": "accounts with > 50 duplicate comments",
        "evidence_type": "content_similarity",
        "strength": "moderate",
        "condition": {
            "feature_query": "WITH t AS (SELECT text, COUNT(*) AS n FROM messages GROUP BY text) "
                             "SELECT m.account_id, SUM(t.n > 1) FROM messages m JOIN t USING (text) GROUP BY m.account_id",
            "comparator": ">",
            "threshold": "50",
        },
    })
    cond = compile_condition(draft)
    assert (cond.comparator, cond.threshold) == (">", 50.0)


def test_missing_threshold_is_not_explicit():
    with pytest.raises(ConditionError) as exc:
        compile_condition({"feature_query": VOLUME, "comparator": ">", "threshold": "many"})
    assert exc.value.explicit_threshold is False


def test_mutation_in_feature_query():
    with pytest.raises(ConditionError, match="sandbox"):
        compile_condition({"feature_query": "DELETE FROM accounts", "comparator": ">", "threshold": 1})


def test_vacuous_and_unattainable_thresholds(store):
    labels = store.labeled_accounts("tiny")
    with store.query_session("tiny") as conn:
        assert apply_condition(conn, _cond(0), labels) == set(labels)
        assert apply_condition(conn, _cond(99), labels) == set()
        assert apply_condition(conn, _cond(1), labels) == {f"p{i}" for i in range(10)}


def test_unlabeled_accounts_excluded(store):
    labels = store.labeled_accounts("tiny")
    assert "u0" not in labels and len(labels) == 20


def test_build_confusion():
    labels = {**{f"p{i}": "positive" for i in range(10)}, **{f"n{i}": "negative" for i in range(10)}}
    assert build_confusion({f"p{i}" for i in range(10)}, labels).as_tuple() == (10, 0, 0, 10)
    assert build_confusion(set(), labels).as_tuple() == (0, 0, 10, 10)
    with pytest.raises(DegenerateLabels):
        build_confusion(set(), {"p0": "positive"})


@pytest.mark.parametrize(
    "or_value, p, explicit, status",
    [
        (36.0, 0.003, True, "PASS"),
        (2.9, 0.001, True, "FAIL"),
        (3.0, 0.049, True, "PASS"),
        (50.0, 0.05, True, "FAIL"),
        (50.0, 0.001, False, "FAIL"),
    ],
)
def test_verdict_boundaries(or_value, p, explicit, status):
    assert verdict("x", explicit, None, or_value, p).status == status


def test_verify_claim_perfect_predictor(store):
    labels = store.labeled_accounts("tiny")
    with store.query_session("tiny") as conn:
        r = verify_claim(conn, "a", {"feature_query": VOLUME, "comparator": ">=", "threshold": 3}, labels)
    assert r.matrix == ConfusionMatrix(10, 0, 0, 10)
    assert r.or_corrected and r.odds_ratio == pytest.approx(441.0)
    assert r.p_value == pytest.approx(2 / 184_756, rel=1e-12)
    assert r.status == "PASS"


def test_verify_claim_failures_are_recorded(store):
    labels = store.labeled_accounts("tiny")
    with store.query_session("tiny") as conn:
        no_thr = verify_claim(conn, "a", {"feature_query": VOLUME, "comparator": ">"}, labels)
        bad_sql = verify_claim(conn, "b", {"feature_query": "SELECT nope FROM messages", "comparator": ">", "threshold": 1}, labels)
        dup = verify_claim(conn, "c", {"feature_query": "SELECT account_id, 1 FROM messages", "comparator": ">", "threshold": 0}, labels)
    assert no_thr.status == "FAIL" and not no_thr.criteria.explicit_threshold
    assert bad_sql.status == "FAIL" and bad_sql.note
    assert dup.status == "FAIL" and "more than once" in dup.note


def test_planted_window_condition_selects_burst_accounts(tmp_path):
    ds = build_campaign(china_like_spec())
    entry = ds.sidecar["patterns"]["creation_burst"]
    store = ingest_files(write_campaign(ds, tmp_path / "c"), tmp_path / "s.db")
    labels = store.labeled_accounts("china_like")
    with store.query_session("china_like") as conn:
        predicted = apply_condition(conn, compile_condition(entry["canonical_condition"]), labels)
    in_window = {a["account_id"] for a in ds.accounts
                 if "2018-08-01" <= a["created_at"][:10] < "2018-09-01"}
    assert predicted == in_window
    assert set(entry["account_ids"]) <= predicted
    m = build_confusion(predicted, labels)
    assert (m.tp, m.fp) == (194, 6)
    assert m.precision == pytest.approx(0.97)
    assert json.dumps(entry["canonical_stats"]["matrix"]) == json.dumps(list(m.as_tuple()))
