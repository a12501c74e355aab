import json

import pytest

from disarmlab.taxonomy import (
    Taxonomy,
    TaxonomyError,
    build_taxonomy,
    children,
    dump_taxonomy,
    load_taxonomy,
    lookup,
)

FIXTURE = [
    {"id": "T0049", "name": "flooding the information space", "tactic_id": "TA17", "description": "d"},
    {"id": "T0049.001", "name": "trolls amplify", "tactic_id": "TA17", "parent_id": "T0049", "description": "d"},
    {"id": "T0049.002", "name": "hashtag hijacking", "tactic_id": "TA17", "parent_id": "T0049", "description": "d"},
    {"id": "T0057", "name": "organise events", "tactic_id": "TA10", "description": "d"},
]


def test_bundled_taxonomy_has_flooding(taxonomy):
    t = lookup(taxonomy, "T0049")
    assert t is not None and t.name == "flooding the information space"


def test_lookup_unknown_is_none(taxonomy):
    assert lookup(taxonomy, "T0000") is None


def test_empty_list_is_valid():
    tax = build_taxonomy([], "empty")
    assert isinstance(tax, Taxonomy) and len(tax.ids()) == 0


def test_subtechnique_parent_strips_suffix():
    tax = build_taxonomy(FIXTURE, "fx")
    sub = lookup(tax, "T0049.001")
    assert sub.parent_id == "T0049" and sub.is_subtechnique
    assert sub.parent_id == sub.id.split(".")[0]


def test_children_sorted_and_empty_cases():
    tax = build_taxonomy(list(reversed(FIXTURE)), "fx")
    assert [c.id for c in children(tax, "T0049")] == ["T0049.001", "T0049.002"]
    assert children(tax, "T0057") == []
    assert children(tax, "T4242") == []


def test_parent_alias_accepted(tmp_path):
    child = {k: v for k, v in FIXTURE[1].items() if k != "parent_id"} | {"parent": "T0049"}
    p = tmp_path / "tax.json"
    p.write_text(json.dumps([FIXTURE[0], child]))
    assert lookup(load_taxonomy(p), "T0049.001").parent_id == "T0049"


def test_dangling_parent_names_missing_id(tmp_path):
    p = tmp_path / "tax.json"
    p.write_text(json.dumps([FIXTURE[0], {"id": "T9999.001", "name": "x", "tactic_id": "TA01", "parent_id": "T9999"}]))
    with pytest.raises(TaxonomyError) as exc:
        load_taxonomy(p)
    assert "T9999" in str(exc.value)


@pytest.mark.parametrize(
    "entry, fragment",
    [
        ({"id": "X49", "name": "n", "tactic_id": "TA1"}, "X49"),
        ({"id": "T0100", "tactic_id": "TA1"}, "name"),
        ({"id": "T0100", "name": "n"}, "tactic"),
        ({"id": "T0049.009", "name": "n", "tactic_id": "TA1"}, "parent"),
        ({"id": "T0049.009", "name": "n", "tactic_id": "TA1", "parent_id": "T0057"}, "T0057"),
        ({"id": "T0100", "name": "n", "tactic_id": "TA1", "parent_id": "T0049"}, "T0100"),
    ],
)
def test_invalid_entries_rejected(entry, fragment):
    with pytest.raises(TaxonomyError) as exc:
        build_taxonomy(FIXTURE + [entry], "bad")
    assert fragment in str(exc.value)


def test_duplicate_id_rejected():
    with pytest.raises(TaxonomyError):
        build_taxonomy(FIXTURE + [FIXTURE[0]], "dup")


def test_all_problems_reported_together():
    bad = [{"id": "nope", "name": "a", "tactic_id": "TA1"}, {"id": "T0001.001", "name": "b", "tactic_id": "TA1", "parent_id": "T0002"}]
    with pytest.raises(TaxonomyError) as exc:
        build_taxonomy(bad, "bad")
    assert len(exc.value.problems) >= 2


def test_round_trip(tmp_path):
    tax = build_taxonomy(FIXTURE, "fx-1")
    p = tmp_path / "out.json"
    dump_taxonomy(tax, p)
    again = load_taxonomy(p)
    assert again.version == "fx-1"
    assert again.to_dict() == tax.to_dict()


def test_bundled_taxonomy_is_acyclic_depth_two(taxonomy):
    for t in taxonomy:
        if t.parent_id:
            assert lookup(taxonomy, t.parent_id).parent_id is None
