"""Abstract autoregressive model interface.

Everything above this layer (engine, analytics, protocol server) is written
against :class:`ModelBackend`: initialize a cache from a token prefix, append
token chunks, get back next-position logits. Backends guarantee determinism
(identical token history yields bit-identical logits), chunk-consistency (any
partition of a sequence produces the same final logits), and branch
independence (handles never interact).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ccd.errors import (
    EmptyPrefixError,
    StaleHandleError,
    TokenOutOfRangeError,
)

TokenSeq = Sequence[int]


@dataclass(frozen=True)
class VocabInfo:
    """Stable vocabulary descriptor advertised by a backend."""

    vocab_size: int
    placeholder_id: int
    eos_id: int
    region_end_id: int | None = None

    def __post_init__(self) -> None:
        if self.vocab_size <= 0:
            raise ValueError("vocab_size must be positive")
        ids = [self.placeholder_id, self.eos_id]
        if self.region_end_id is not None:
            ids.append(self.region_end_id)
        for i in ids:
            if not 0 <= i < self.vocab_size:
                raise ValueError(f"special token id {i} outside vocabulary")
        if self.placeholder_id == self.eos_id:
            raise ValueError("placeholder_id must differ from eos_id")


class CacheHandle:
    """Opaque incremental decoding state for one branch.

    Single-owner: appends must not be issued concurrently. ``length`` is the
    number of tokens absorbed and only ever grows.
    """

    def __init__(self, owner: "ModelBackend") -> None:
        self._owner = owner
        self.length = 0

    def __repr__(self) -> str:
        return f"<{type(self).__name__} length={self.length}>"


class ModelBackend(ABC):
    """Deterministic next-token-logits provider with incremental caches."""

    @abstractmethod
    def vocab_info(self) -> VocabInfo:
        """Vocabulary descriptor; identical across calls."""

    @abstractmethod
    def init_cache(self, prefix: TokenSeq) -> tuple[CacheHandle, np.ndarray]:
        """Absorb a nonempty prefix into a fresh cache.

        Returns the handle and the logits for the position following the
        prefix.
        """

    @abstractmethod
    def append_chunk(self, cache: CacheHandle, tokens: TokenSeq) -> np.ndarray:
        """Absorb tokens in order; returns logits after the last one."""

    # -- shared validation -------------------------------------------------

    def _require_tokens(self, tokens: TokenSeq, *, context: str) -> list[int]:
        toks = [int(t) for t in tokens]
        if not toks:
            raise EmptyPrefixError(f"{context}: token sequence is empty")
        vocab = self.vocab_info().vocab_size
        for t in toks:
            if not 0 <= t < vocab:
                raise TokenOutOfRangeError(
                    f"{context}: token {t} outside vocabulary of size {vocab}"
                )
        return toks

    def _require_owned(self, cache: CacheHandle) -> None:
        if getattr(cache, "_owner", None) is not self:
            raise StaleHandleError("cache handle does not belong to this backend")
