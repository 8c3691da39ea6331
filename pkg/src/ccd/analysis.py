"""Post-hoc analytics over decoded trajectories.

Pure functions over immutable inputs: distribution diagnostics (entropy,
top-logit margin), intervention effect aggregates, per-trajectory summaries,
response-length comparisons across modes, and the masking probe that checks
the direction of the contrastive branch's effect on a backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from ccd import kernels
from ccd.backends.base import ModelBackend
from ccd.engine import Trajectory
from ccd.errors import NoInterventionsError
from ccd.keywords import KeywordCatalog, default_catalog, keyword_frequency

__all__ = [
    "KeywordCatalog",
    "MaskingProbeResult",
    "TraceSummary",
    "confidence_histogram",
    "default_catalog",
    "entropy",
    "group_by_mode",
    "intervention_confidence_delta",
    "keyword_frequency",
    "length_stats",
    "masking_probe",
    "summarize",
    "top_margin",
    "trajectory_confidence",
]


def entropy(logits: np.ndarray) -> float:
    """Shannon entropy in nats of softmax(logits)."""
    x = np.ascontiguousarray(logits, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("logits must be a nonempty 1-d array")
    return float(kernels.entropy(x))


def top_margin(logits: np.ndarray) -> float:
    """Largest logit minus second largest."""
    x = np.ascontiguousarray(logits, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("top margin needs at least two logits")
    return float(kernels.top_margin(x))


def trajectory_confidence(trajectory: Trajectory) -> float:
    """Arithmetic mean of per-step pre-fusion confidences."""
    if not trajectory.traces:
        raise ValueError("trajectory has no generated steps")
    return sum(t.confidence for t in trajectory.traces) / len(trajectory.traces)


def intervention_confidence_delta(
    trajectories: Iterable[Trajectory],
) -> tuple[float, float]:
    """Mean pre- and post-fusion confidence over all intervention steps."""
    pre: list[float] = []
    post: list[float] = []
    for traj in trajectories:
        for t in traj.traces:
            if t.i_cd == 1 and t.post_confidence is not None:
                pre.append(t.confidence)
                post.append(t.post_confidence)
    if not pre:
        raise NoInterventionsError("no intervention steps in the given trajectories")
    return sum(pre) / len(pre), sum(post) / len(post)


def group_by_mode(trajectories: Iterable[Trajectory]) -> dict[str, list[Trajectory]]:
    groups: dict[str, list[Trajectory]] = {}
    for traj in trajectories:
        groups.setdefault(traj.config.mode, []).append(traj)
    return groups


def length_stats(groups: Mapping[str, Sequence[Trajectory]]) -> dict[str, float]:
    """Mean generated length per mode group."""
    out = {}
    for mode, trajs in groups.items():
        if not trajs:
            raise ValueError(f"mode group {mode!r} is empty")
        out[mode] = sum(len(t.generated) for t in trajs) / len(trajs)
    return out


def confidence_histogram(
    confidences: Iterable[float], bin_width: float = 0.25
) -> dict[int, int]:
    """Sparse histogram {bin index: count}; bin i covers [i*w, (i+1)*w)."""
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    bins: dict[int, int] = {}
    for c in confidences:
        idx = math.floor(c / bin_width)
        bins[idx] = bins.get(idx, 0) + 1
    return dict(sorted(bins.items()))


@dataclass(frozen=True)
class TraceSummary:
    """Per-trajectory aggregates; intervention stats only when any fired."""

    generated_length: int
    trajectory_confidence: float | None
    intervention_count: int
    mean_pre_confidence: float | None
    mean_post_confidence: float | None
    mean_entropy_main: float | None
    mean_entropy_cd: float | None
    mean_top_margin_main: float | None
    mean_top_margin_cd: float | None

    def to_dict(self) -> dict:
        return {
            "generated_length": self.generated_length,
            "trajectory_confidence": self.trajectory_confidence,
            "intervention_count": self.intervention_count,
            "mean_pre_confidence": self.mean_pre_confidence,
            "mean_post_confidence": self.mean_post_confidence,
            "mean_entropy_main": self.mean_entropy_main,
            "mean_entropy_cd": self.mean_entropy_cd,
            "mean_top_margin_main": self.mean_top_margin_main,
            "mean_top_margin_cd": self.mean_top_margin_cd,
        }


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def summarize(trajectory: Trajectory) -> TraceSummary:
    traces = trajectory.traces
    hits = [t for t in traces if t.i_cd == 1 and t.post_confidence is not None]
    return TraceSummary(
        generated_length=len(trajectory.generated),
        trajectory_confidence=_mean([t.confidence for t in traces]),
        intervention_count=len(hits),
        mean_pre_confidence=_mean([t.confidence for t in hits]),
        mean_post_confidence=_mean([t.post_confidence for t in hits]),
        mean_entropy_main=_mean([t.entropy_main for t in traces]),
        mean_entropy_cd=_mean([t.entropy_cd for t in traces if t.entropy_cd is not None]),
        mean_top_margin_main=_mean([t.top_margin_main for t in traces]),
        mean_top_margin_cd=_mean(
            [t.top_margin_cd for t in traces if t.top_margin_cd is not None]
        ),
    )


@dataclass(frozen=True)
class MaskingProbeResult:
    contexts: int
    masked_per_context: int
    mean_entropy_main: float
    mean_entropy_masked: float
    mean_margin_main: float
    mean_margin_masked: float

    @property
    def entropy_delta(self) -> float:
        return self.mean_entropy_masked - self.mean_entropy_main

    @property
    def margin_delta(self) -> float:
        return self.mean_margin_masked - self.mean_margin_main


def masking_probe(
    backend: ModelBackend,
    *,
    contexts: int = 200,
    context_len: int = 32,
    mask_fraction: float = 0.05,
    k: int = 20,
    seed: int = 0,
    sample_temperature: float = 1.0,
) -> MaskingProbeResult:
    """Measure how placeholder-masking confident tokens reshapes predictions.

    For each probe context: let the backend generate its own continuation,
    score every generated token's confidence, replace the most confident
    `mask_fraction` of positions with the placeholder, and compare the
    next-token distribution of the original context against the masked one.
    Returns means over all contexts; callers assert directions on the deltas,
    not on individual contexts.
    """
    if context_len < 2:
        raise ValueError("context_len must be at least 2")
    info = backend.vocab_info()
    n_mask = max(1, round(mask_fraction * context_len))
    ent_main: list[float] = []
    ent_masked: list[float] = []
    mar_main: list[float] = []
    mar_masked: list[float] = []
    for i in range(contexts):
        rng = np.random.default_rng([seed, i])
        first = int(rng.integers(2, info.vocab_size))
        tokens = [first]
        confidences: list[float] = [-math.inf]  # seed token has no confidence
        cache, logits = backend.init_cache(tokens)
        while len(tokens) < context_len:
            confidences.append(float(kernels.token_confidence(logits, k)))
            probs = kernels.softmax(logits / sample_temperature)
            nxt = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
            nxt = min(nxt, info.vocab_size - 1)
            tokens.append(nxt)
            logits = backend.append_chunk(cache, [nxt])
        order = np.argsort(np.asarray(confidences), kind="stable")[::-1]
        masked = list(tokens)
        for pos in order[:n_mask]:
            masked[pos] = info.placeholder_id
        _, masked_logits = backend.init_cache(masked)
        ent_main.append(float(kernels.entropy(logits)))
        ent_masked.append(float(kernels.entropy(masked_logits)))
        mar_main.append(float(kernels.top_margin(logits)))
        mar_masked.append(float(kernels.top_margin(masked_logits)))
    return MaskingProbeResult(
        contexts=contexts,
        masked_per_context=n_mask,
        mean_entropy_main=float(np.mean(ent_main)),
        mean_entropy_masked=float(np.mean(ent_masked)),
        mean_margin_main=float(np.mean(mar_main)),
        mean_margin_masked=float(np.mean(mar_masked)),
    )
