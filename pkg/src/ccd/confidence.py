"""Confidence statistics: per-token scores, sliding window, thresholds.

The confidence of a next-token distribution is the negative mean log
probability of its top-k tokens. Computed as logsumexp(logits) minus the
mean of the top-k logits, which stays finite even when logits contain large
negative masking values.

Recent confidences live in a fixed-capacity sliding window. Once the window
has seen `capacity` values it is warm, and the decision thresholds are
percentiles of its contents: tau_cd at q_cd from the bottom, tau_rep at
q_rep_top from the top. Until then both thresholds sit at infinity so no
indicator can fire.
"""

from __future__ import annotations

from bisect import bisect_left, insort
from collections import deque
from dataclasses import dataclass
from math import floor, inf

import numpy as np

from ccd import kernels


def token_confidence(logits: np.ndarray, k: int) -> float:
    """Negative mean log-probability of the k most likely tokens.

    When k exceeds the vocabulary size the mean runs over the whole
    vocabulary.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    x = np.ascontiguousarray(logits, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("logits must be a nonempty 1-d array")
    return float(kernels.token_confidence(x, k))


def percentile_linear(sorted_values, q: float) -> float:
    """Percentile with linear interpolation between closest ranks.

    `sorted_values` must be ascending. The rank of q in n values is
    h = (n - 1) * q / 100 + 1 (1-indexed), interpolating between the two
    bracketing order statistics.
    """
    if not 0.0 <= q <= 100.0:
        raise ValueError(f"percentile must lie in [0, 100], got {q}")
    n = len(sorted_values)
    if n == 0:
        raise ValueError("cannot take a percentile of no values")
    h = (n - 1) * q / 100.0
    lo = floor(h)
    if lo >= n - 1:
        return float(sorted_values[n - 1])
    frac = h - lo
    return float(sorted_values[lo] + frac * (sorted_values[lo + 1] - sorted_values[lo]))


class ConfidenceWindow:
    """Sliding window over recent confidences with an ordered view.

    Keeps arrival order in a deque and a parallel sorted list, so FIFO
    eviction and percentile lookups are both cheap for the window sizes the
    decoder uses.
    """

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError(f"window capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._order: deque[float] = deque()
        self._sorted: list[float] = []
        self._pushes = 0

    def push(self, value: float) -> float | None:
        """Add a confidence; returns the evicted value once at capacity."""
        value = float(value)
        evicted = None
        if len(self._order) == self.capacity:
            evicted = self._order.popleft()
            del self._sorted[bisect_left(self._sorted, evicted)]
        self._order.append(value)
        insort(self._sorted, value)
        self._pushes += 1
        return evicted

    def sorted_after(self, value: float) -> tuple[float, ...]:
        """Ordered contents as they would look after ``push(value)``.

        Does not mutate the window; lets a caller compute thresholds for a
        step before committing its confidence.
        """
        value = float(value)
        out = list(self._sorted)
        if len(out) == self.capacity:
            del out[bisect_left(out, self._order[0])]
        insort(out, value)
        return tuple(out)

    @property
    def warmed(self) -> bool:
        return self._pushes >= self.capacity

    def values(self) -> tuple[float, ...]:
        """Contents in arrival order, oldest first."""
        return tuple(self._order)

    def sorted_values(self) -> tuple[float, ...]:
        return tuple(self._sorted)

    def __len__(self) -> int:
        return len(self._order)


@dataclass(frozen=True)
class Thresholds:
    tau_cd: float
    tau_rep: float

    @classmethod
    def inactive(cls) -> "Thresholds":
        return cls(tau_cd=-inf, tau_rep=inf)


def compute_thresholds(sorted_values, q_cd: float, q_rep_top: float) -> Thresholds:
    """Percentile thresholds over an ascending confidence sample.

    tau_cd is the q_cd-th percentile; tau_rep is measured from the top, i.e.
    the (100 - q_rep_top)-th percentile. An empty sample yields the inactive
    pair (-inf, +inf) under which no indicator can fire.
    """
    if len(sorted_values) == 0:
        return Thresholds.inactive()
    return Thresholds(
        tau_cd=percentile_linear(sorted_values, q_cd),
        tau_rep=percentile_linear(sorted_values, 100.0 - q_rep_top),
    )


@dataclass(frozen=True)
class IndicatorPair:
    i_cd: int
    i_rep: int


def classify(confidence: float, thresholds: Thresholds, in_region: bool) -> IndicatorPair:
    """Strict-inequality indicators, gated by region membership."""
    if not in_region:
        return IndicatorPair(0, 0)
    return IndicatorPair(
        i_cd=int(confidence < thresholds.tau_cd),
        i_rep=int(confidence > thresholds.tau_rep),
    )
