"""Scripted backends with fully predictable logits.

Two modes, chosen by constructor argument:

* schedule: logits depend only on how many tokens the cache has absorbed.
  Row index wraps modulo the schedule length.
* table: logits depend only on the most recent token.

Both are trivially deterministic and chunk-consistent, which makes them the
reference substrate for engine tests: every threshold crossing can be placed
by hand.
"""

from __future__ import annotations

import re
from typing import Sequence

import numpy as np

from ccd.backends.base import CacheHandle, ModelBackend, VocabInfo


class _MockCache(CacheHandle):
    def __init__(self, owner: "MockBackend") -> None:
        super().__init__(owner)
        self.tokens: list[int] = []


class MockBackend(ModelBackend):
    def __init__(
        self,
        *,
        schedule: np.ndarray | None = None,
        table: np.ndarray | None = None,
        placeholder_id: int = 0,
        eos_id: int = 1,
        region_end_id: int | None = None,
    ) -> None:
        if (schedule is None) == (table is None):
            raise ValueError("exactly one of schedule or table is required")
        rows = schedule if schedule is not None else table
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise ValueError("logit rows must be a nonempty 2-d array")
        self._rows = rows
        self._by_table = table is not None
        if self._by_table and rows.shape[0] != rows.shape[1]:
            raise ValueError("table mode needs one row per vocabulary entry")
        self._info = VocabInfo(
            vocab_size=rows.shape[1],
            placeholder_id=placeholder_id,
            eos_id=eos_id,
            region_end_id=region_end_id,
        )

    def vocab_info(self) -> VocabInfo:
        return self._info

    def init_cache(self, prefix: Sequence[int]) -> tuple[CacheHandle, np.ndarray]:
        toks = self._require_tokens(prefix, context="init_cache")
        cache = _MockCache(self)
        cache.tokens.extend(toks)
        cache.length = len(cache.tokens)
        return cache, self._next_logits(cache)

    def append_chunk(self, cache: CacheHandle, tokens: Sequence[int]) -> np.ndarray:
        self._require_owned(cache)
        assert isinstance(cache, _MockCache)
        toks = self._require_tokens(tokens, context="append_chunk")
        cache.tokens.extend(toks)
        cache.length = len(cache.tokens)
        return self._next_logits(cache)

    def _next_logits(self, cache: _MockCache) -> np.ndarray:
        if self._by_table:
            row = self._rows[cache.tokens[-1]]
        else:
            row = self._rows[cache.length % self._rows.shape[0]]
        return row.copy()


def _leader_row(vocab: int, leader: int, height: float) -> np.ndarray:
    row = np.zeros(vocab)
    row[leader] = height
    return row


def _alternator() -> MockBackend:
    # Last-token table over vocab 8. Token 2 predicts a mild leader (low
    # confidence), token 3 a sharp one (high confidence), so greedy decoding
    # oscillates 2 <-> 3 and confidences alternate low/high. The placeholder
    # row is flat: a masked predecessor yields uniform contrastive logits.
    table = np.zeros((8, 8))
    table[2] = _leader_row(8, 3, 2.0)
    table[3] = _leader_row(8, 2, 8.0)
    for t in (1, 4, 5, 6, 7):
        table[t] = _leader_row(8, 2, 8.0)
    return MockBackend(table=table)


def _dip10() -> MockBackend:
    # Length schedule over vocab 8: one flatter row at absorbed-length 12,
    # i.e. the 10th generated position after a 3-token prompt. Everything
    # else is the same sharp baseline row.
    base = _leader_row(8, 2, 3.0)
    dip = _leader_row(8, 3, 1.0)
    schedule = np.tile(base, (64, 1))
    schedule[12] = dip
    return MockBackend(schedule=schedule)


def _uniform() -> MockBackend:
    return MockBackend(schedule=np.zeros((1, 8)))


def _ramp() -> MockBackend:
    return MockBackend(schedule=np.linspace(0.0, 2.8, 8)[None, :].copy())


def _random(seed: int) -> MockBackend:
    rng = np.random.default_rng(seed)
    rows = rng.normal(0.0, 1.5, size=(384, 16))
    # keep EOS improbable so sampled decodes reach their token budget
    rows[:, 1] -= 8.0
    return MockBackend(schedule=rows)


_FIXED = {
    "alternator": _alternator,
    "dip10": _dip10,
    "uniform": _uniform,
    "ramp": _ramp,
}

_RANDOM = re.compile(r"random-(\d+)$")


def scenario(name: str) -> MockBackend:
    """Build a registered mock scenario, e.g. ``alternator`` or ``random-7``."""
    if name in _FIXED:
        return _FIXED[name]()
    m = _RANDOM.match(name)
    if m:
        return _random(int(m.group(1)))
    known = ", ".join(sorted(_FIXED) + ["random-<seed>"])
    raise ValueError(f"unknown mock scenario {name!r} (known: {known})")
