"""Keyword catalog loading and counting semantics."""

import json

import pytest

from ccd.keywords import KeywordCatalog, default_catalog, keyword_frequency
from keyword_fixtures import FIXTURES

CATEGORIES = [
    "Hesitation",
    "Correction",
    "Self-Correction",
    "Alternatives",
    "Verification",
    "Markers",
]


def test_default_catalog_shape():
    cat = default_catalog()
    assert list(cat.categories) == CATEGORIES
    assert "wait" in cat.categories["Hesitation"]
    assert "But wait" in cat.categories["Correction"]
    assert cat.categories["Markers"] == ("SO",)


def test_packaged_duplicate_is_dropped_once():
    from importlib import resources

    raw = json.loads(
        resources.files("ccd").joinpath("data/keywords.json").read_text("utf-8")
    )
    alts = raw["categories"]["Alternatives"]
    assert alts.count("similarly") == 2  # shipped verbatim with the repeat
    cat = default_catalog()
    assert cat.categories["Alternatives"].count("similarly") == 1


@pytest.mark.parametrize("text,expected", FIXTURES, ids=[f"fixture{i}" for i in range(5)])
def test_hand_counted_fixtures(text, expected):
    assert keyword_frequency(text, default_catalog()) == expected


def test_every_category_exercised_by_fixtures():
    touched = set()
    for _, expected in FIXTURES:
        touched |= {cat for cat, n in expected.items() if n > 0}
    assert touched == set(CATEGORIES)


def test_counts_are_additive_across_safe_joins():
    # no keyword contains a newline, so joining with "\n\n" cannot create
    # matches that straddle the seam
    cat = default_catalog()
    for a, _ in FIXTURES:
        for b, _ in FIXTURES:
            joined = keyword_frequency(a + "\n\n" + b, cat)
            ca, cb = keyword_frequency(a, cat), keyword_frequency(b, cat)
            assert joined == {k: ca[k] + cb[k] for k in ca}


def test_compound_keywords_overlap_their_parts():
    counts = keyword_frequency("Wait,but wait", default_catalog())
    # Correction: "Wait,but" + "but" + "but wait"
    assert counts["Correction"] == 3
    # Hesitation: leading "Wait" and trailing "wait"
    assert counts["Hesitation"] == 2


def test_nonoverlapping_within_one_keyword():
    counts = keyword_frequency("SOSOSO", default_catalog())
    assert counts["Markers"] == 3


def test_empty_text_gives_all_zeros():
    counts = keyword_frequency("", default_catalog())
    assert set(counts) == set(CATEGORIES)
    assert all(v == 0 for v in counts.values())


def test_catalog_validation():
    with pytest.raises(ValueError):
        KeywordCatalog(categories={})
    with pytest.raises(ValueError):
        KeywordCatalog(categories={"X": ()})
    with pytest.raises(ValueError):
        KeywordCatalog(categories={"X": ("ok", "")})


def test_catalog_from_file(tmp_path):
    p = tmp_path / "cat.json"
    p.write_text(json.dumps({"categories": {"A": ["x", "x", "y"]}}), encoding="utf-8")
    cat = KeywordCatalog.from_file(p)
    assert cat.categories == {"A": ("x", "y")}
    p.write_text(json.dumps(["not", "a", "catalog"]), encoding="utf-8")
    with pytest.raises(ValueError):
        KeywordCatalog.from_file(p)
