"""Thinking-keyword catalog and counting.

Counting is case-sensitive exact substring matching: per keyword the count
is the number of non-overlapping left-to-right occurrences, and keywords are
counted independently of each other, so a span like "But wait" contributes
to "wait" and to "But wait" at the same time. A category's count is the sum
over its keywords.

The packaged catalog intentionally contains a duplicated entry in one
category; duplicates are dropped at load time so no keyword is counted
twice.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path


@dataclass(frozen=True)
class KeywordCatalog:
    categories: dict[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        if not self.categories:
            raise ValueError("catalog has no categories")
        for name, kws in self.categories.items():
            if not kws:
                raise ValueError(f"category {name!r} has no keywords")
            if any(not kw for kw in kws):
                raise ValueError(f"category {name!r} contains an empty keyword")

    @classmethod
    def from_mapping(cls, categories: dict) -> "KeywordCatalog":
        deduped = {}
        for name, kws in categories.items():
            seen: list[str] = []
            for kw in kws:
                if kw not in seen:
                    seen.append(kw)
            deduped[str(name)] = tuple(seen)
        return cls(categories=deduped)

    @classmethod
    def from_file(cls, path: str | Path) -> "KeywordCatalog":
        with open(path, "r", encoding="utf-8") as fp:
            doc = json.load(fp)
        if not isinstance(doc, dict) or "categories" not in doc:
            raise ValueError("keyword file must be an object with 'categories'")
        return cls.from_mapping(doc["categories"])


def default_catalog() -> KeywordCatalog:
    data = resources.files("ccd").joinpath("data/keywords.json").read_text("utf-8")
    return KeywordCatalog.from_mapping(json.loads(data)["categories"])


def keyword_frequency(text: str, catalog: KeywordCatalog) -> dict[str, int]:
    """Occurrences per category; every category present, zeros included."""
    return {
        name: sum(text.count(kw) for kw in kws)
        for name, kws in catalog.categories.items()
    }
