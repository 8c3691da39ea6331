"""Confidence-driven contrastive decoding loop.

Each step reads the main branch's next-token logits, scores their confidence,
and classifies the step against windowed percentile thresholds. Steps whose
confidence drops below tau_cd are intervention points: the step's logits are
fused with logits from a parallel contrastive branch whose history has
high-confidence tokens replaced by a placeholder. Steps above tau_rep mark
the previously sampled token for that replacement.

The contrastive branch is a second backend cache fed one (possibly masked)
token behind the main branch. In eager mode it advances every step; in lazy
mode masked tokens accumulate and are absorbed in a single chunk the moment
contrastive logits are actually needed, which backends' chunk-consistency
guarantees makes equivalent.

Thresholds only become active once the step index exceeds the window size,
so the first W generated steps never fire an indicator. From step W+1 on,
the window holds the current confidence plus the W-1 before it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ccd import kernels
from ccd.backends.base import ModelBackend, VocabInfo
from ccd.confidence import (
    ConfidenceWindow,
    Thresholds,
    classify,
    compute_thresholds,
    token_confidence,
)

MODES = ("base", "ccd", "contrastive-only")
ATTRIBUTIONS = ("algorithm1", "sampled-step")
SAMPLER_KINDS = ("greedy", "temperature", "top-p")

# Fused logits past this magnitude are clamped before softmax; large alpha
# against near-opposite branches can otherwise overflow exp().
CLAMP_LIMIT = 1e4

LABELS = ("correct", "incorrect", "unknown")


def _require_fields(doc: dict, allowed: set[str], what: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown {what} fields: {sorted(unknown)}")


@dataclass(frozen=True)
class SamplerSpec:
    kind: str = "temperature"
    temperature: float = 0.6
    top_p: float = 0.95

    def __post_init__(self) -> None:
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"sampler kind must be one of {SAMPLER_KINDS}")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must lie in (0, 1]")

    def to_json(self) -> dict:
        return {"kind": self.kind, "temperature": self.temperature, "top_p": self.top_p}

    @classmethod
    def from_json(cls, doc: dict) -> "SamplerSpec":
        _require_fields(doc, {"kind", "temperature", "top_p"}, "sampler")
        return cls(**doc)


@dataclass(frozen=True)
class RegionSpec:
    """Generated-step span where indicators may fire.

    ``start`` is the first eligible generated step (1-based; the prompt is
    never eligible). Emitting ``end_token`` closes the region for all later
    steps; the emitting step itself is still inside.
    """

    start: int = 1
    end_token: int | None = None

    def __post_init__(self) -> None:
        if self.start < 1:
            raise ValueError("region start must be at least 1")

    def to_json(self) -> dict:
        return {"start": self.start, "end_token": self.end_token}

    @classmethod
    def from_json(cls, doc: dict) -> "RegionSpec":
        _require_fields(doc, {"start", "end_token"}, "region")
        return cls(**doc)


@dataclass(frozen=True)
class DecodeConfig:
    W: int = 64
    k: int = 20
    q_cd: float = 3.0
    q_rep_top: float = 5.0
    alpha: float = 0.5
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    max_new_tokens: int = 256
    seed: int = 0
    region: RegionSpec = field(default_factory=RegionSpec)
    lazy_contrastive: bool = False
    attribution: str = "algorithm1"
    mode: str = "ccd"

    def __post_init__(self) -> None:
        if self.W < 1:
            raise ValueError("W must be at least 1")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        for name, q in (("q_cd", self.q_cd), ("q_rep_top", self.q_rep_top)):
            if not 0.0 <= q <= 100.0:
                raise ValueError(f"{name} must lie in [0, 100]")
        if self.q_cd + self.q_rep_top > 100.0:
            raise ValueError("q_cd + q_rep_top must not exceed 100")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be at least 1")
        if self.attribution not in ATTRIBUTIONS:
            raise ValueError(f"attribution must be one of {ATTRIBUTIONS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    def to_json(self) -> dict:
        return {
            "W": self.W,
            "k": self.k,
            "q_cd": self.q_cd,
            "q_rep_top": self.q_rep_top,
            "alpha": self.alpha,
            "sampler": self.sampler.to_json(),
            "max_new_tokens": self.max_new_tokens,
            "seed": self.seed,
            "region": self.region.to_json(),
            "lazy_contrastive": self.lazy_contrastive,
            "attribution": self.attribution,
            "mode": self.mode,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DecodeConfig":
        allowed = {
            "W", "k", "q_cd", "q_rep_top", "alpha", "sampler", "max_new_tokens",
            "seed", "region", "lazy_contrastive", "attribution", "mode",
        }
        _require_fields(doc, allowed, "config")
        kwargs = dict(doc)
        if "sampler" in kwargs:
            kwargs["sampler"] = SamplerSpec.from_json(kwargs["sampler"])
        if "region" in kwargs:
            kwargs["region"] = RegionSpec.from_json(kwargs["region"])
        return cls(**kwargs)


@dataclass(frozen=True)
class StepTrace:
    """Everything observable about one generated step."""

    step: int
    confidence: float
    tau_cd: float
    tau_rep: float
    i_cd: int
    i_rep: int
    in_region: bool
    entropy_main: float
    top_margin_main: float
    token: int
    entropy_cd: float | None = None
    top_margin_cd: float | None = None
    post_confidence: float | None = None
    clamped: bool = False

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "confidence": self.confidence,
            "tau_cd": self.tau_cd,
            "tau_rep": self.tau_rep,
            "i_cd": self.i_cd,
            "i_rep": self.i_rep,
            "in_region": self.in_region,
            "entropy_main": self.entropy_main,
            "top_margin_main": self.top_margin_main,
            "entropy_cd": self.entropy_cd,
            "top_margin_cd": self.top_margin_cd,
            "post_confidence": self.post_confidence,
            "token": self.token,
            "clamped": self.clamped,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StepTrace":
        allowed = {
            "step", "confidence", "tau_cd", "tau_rep", "i_cd", "i_rep",
            "in_region", "entropy_main", "top_margin_main", "entropy_cd",
            "top_margin_cd", "post_confidence", "token", "clamped",
        }
        _require_fields(doc, allowed, "step trace")
        return cls(**doc)


@dataclass
class Trajectory:
    prompt: list[int]
    generated: list[int]
    traces: list[StepTrace]
    config: DecodeConfig
    vocab: dict
    label: str = "unknown"
    text: str | None = None

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}")
        if len(self.generated) != len(self.traces):
            raise ValueError("one trace per generated token is required")

    def to_dict(self) -> dict:
        return {
            "prompt": list(self.prompt),
            "generated": list(self.generated),
            "traces": [t.to_dict() for t in self.traces],
            "config": self.config.to_json(),
            "vocab": dict(self.vocab),
            "label": self.label,
            "text": self.text,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Trajectory":
        allowed = {"prompt", "generated", "traces", "config", "vocab", "label", "text"}
        _require_fields(doc, allowed, "trajectory")
        kwargs = dict(doc)
        kwargs["traces"] = [StepTrace.from_dict(t) for t in doc["traces"]]
        kwargs["config"] = DecodeConfig.from_json(doc["config"])
        return cls(**kwargs)


# -- pure pieces of the loop -------------------------------------------------


def fuse_logits(l_main: np.ndarray, l_cd: np.ndarray, alpha: float) -> np.ndarray:
    """(1 + alpha) * main - alpha * contrastive, elementwise."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    a = np.ascontiguousarray(l_main, dtype=np.float64)
    b = np.ascontiguousarray(l_cd, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"logit shapes differ: {a.shape} vs {b.shape}")
    return kernels.fuse(a, b, float(alpha))


def contrastive_token(prev: int, i_rep: int, placeholder: int) -> int:
    """Masked counterpart of the previous token for the contrastive branch."""
    return placeholder if i_rep == 1 else prev


def sampler_distribution(logits: np.ndarray, sampler: SamplerSpec) -> np.ndarray:
    """Exact probability vector the sampler draws from."""
    x = np.ascontiguousarray(logits, dtype=np.float64)
    if sampler.kind == "greedy":
        p = np.zeros_like(x)
        p[int(np.argmax(x))] = 1.0
        return p
    probs = kernels.softmax(x / sampler.temperature)
    if sampler.kind == "temperature":
        return probs
    # top-p: smallest probability-sorted prefix reaching mass p, renormalized.
    order = np.argsort(-probs, kind="stable")
    csum = np.cumsum(probs[order])
    cut = min(int(np.searchsorted(csum, sampler.top_p, side="left")), len(csum) - 1)
    keep = order[: cut + 1]
    out = np.zeros_like(probs)
    out[keep] = probs[keep] / csum[cut]
    return out


def sample(l_final: np.ndarray, sampler: SamplerSpec, rng: np.random.Generator) -> int:
    """Draw one token; consumes exactly one uniform unless greedy."""
    if sampler.kind == "greedy":
        return int(np.argmax(l_final))
    p = sampler_distribution(l_final, sampler)
    cum = np.cumsum(p)
    idx = int(np.searchsorted(cum, rng.random(), side="right"))
    return min(idx, len(cum) - 1)


# -- session and loop ---------------------------------------------------------


@dataclass
class _StagedStep:
    # A step whose main-cache append failed; retried without resampling.
    token: int
    confidence: float
    trace: StepTrace
    closes_region: bool


class DecodeSession:
    """Mutable state of one decode. Single-owner, strictly sequential.

    Backend failures raise out of :func:`step` with the session still
    consistent: completed backend work is remembered, so calling step again
    resumes instead of repeating side effects.
    """

    def __init__(
        self, config: DecodeConfig, prompt: Sequence[int], backend: ModelBackend
    ) -> None:
        self.prompt = [int(t) for t in prompt]
        self.vocab: VocabInfo = backend.vocab_info()
        self.main_cache, self.current_logits = backend.init_cache(self.prompt)
        self.cd_cache, self.cd_logits = backend.init_cache(self.prompt)
        self.pending_cd_tokens: list[int] = []
        self.window = ConfidenceWindow(config.W)
        self.rng = np.random.default_rng(config.seed)
        self.step = 0
        self.finished = False
        self.generated: list[int] = []
        self.traces: list[StepTrace] = []
        self.region_open = True
        self.last_i_rep = 0
        # index of the newest generated token absorbed into (or pended for)
        # the contrastive branch; guards against double-appends on retry
        self.cd_fed_upto = 0
        self.staged: _StagedStep | None = None
        end = config.region.end_token
        self.region_end = end if end is not None else self.vocab.region_end_id

    def in_region(self, step_index: int, region_start: int) -> bool:
        return self.region_open and step_index >= region_start

    def cache_lengths(self) -> tuple[int, int, int]:
        return self.main_cache.length, self.cd_cache.length, len(self.pending_cd_tokens)


def step(session: DecodeSession, config: DecodeConfig, backend: ModelBackend) -> StepTrace:
    """Run one decode iteration and return its trace."""
    if session.finished:
        raise RuntimeError("session is finished")

    if session.staged is not None:
        return _commit(session, config, backend, session.staged)

    t = session.step + 1
    l_main = session.current_logits

    confidence = token_confidence(l_main, config.k)
    if t > config.W:
        thresholds = compute_thresholds(
            session.window.sorted_after(confidence), config.q_cd, config.q_rep_top
        )
    else:
        thresholds = Thresholds.inactive()

    in_region = session.in_region(t, config.region.start)
    if config.mode == "base":
        flags = classify(confidence, Thresholds.inactive(), in_region)
    else:
        flags = classify(confidence, thresholds, in_region)

    entropy_cd = margin_cd = post_confidence = None
    clamped = False
    l_final = l_main

    if config.mode != "base":
        _feed_contrastive(session, config, backend, t, flags.i_rep)
        need_cd = flags.i_cd == 1 or config.mode == "contrastive-only"
        if need_cd:
            l_cd = _contrastive_logits(session, backend)
            entropy_cd = float(kernels.entropy(l_cd))
            margin_cd = float(kernels.top_margin(l_cd))
            if config.mode == "contrastive-only":
                l_final = l_cd
            else:
                l_final = fuse_logits(l_main, l_cd, config.alpha)
            l_final, clamped = kernels.clamp(l_final, CLAMP_LIMIT)
            post_confidence = token_confidence(l_final, config.k)

    token = sample(l_final, config.sampler, session.rng)

    trace = StepTrace(
        step=t,
        confidence=confidence,
        tau_cd=thresholds.tau_cd,
        tau_rep=thresholds.tau_rep,
        i_cd=flags.i_cd,
        i_rep=flags.i_rep,
        in_region=in_region,
        entropy_main=float(kernels.entropy(l_main)),
        top_margin_main=float(kernels.top_margin(l_main)),
        token=token,
        entropy_cd=entropy_cd,
        top_margin_cd=margin_cd,
        post_confidence=post_confidence,
        clamped=bool(clamped),
    )
    staged = _StagedStep(
        token=token,
        confidence=confidence,
        trace=trace,
        closes_region=session.region_end is not None and token == session.region_end,
    )
    session.staged = staged
    session.last_i_rep = flags.i_rep
    return _commit(session, config, backend, staged)


def _feed_contrastive(
    session: DecodeSession,
    config: DecodeConfig,
    backend: ModelBackend,
    t: int,
    i_rep_now: int,
) -> None:
    # The first generated step has no generated predecessor; both caches
    # already hold the full prompt, so nothing is appended.
    if t < 2 or session.cd_fed_upto >= t - 1:
        return
    prev = session.generated[t - 2]
    i_rep = i_rep_now if config.attribution == "algorithm1" else session.last_i_rep
    masked = contrastive_token(prev, i_rep, session.vocab.placeholder_id)
    if config.lazy_contrastive:
        session.pending_cd_tokens.append(masked)
    else:
        session.cd_logits = backend.append_chunk(session.cd_cache, [masked])
    session.cd_fed_upto = t - 1


def _contrastive_logits(session: DecodeSession, backend: ModelBackend) -> np.ndarray:
    if session.pending_cd_tokens:
        logits = backend.append_chunk(session.cd_cache, session.pending_cd_tokens)
        session.pending_cd_tokens.clear()
        session.cd_logits = logits
    assert session.cd_cache.length == session.main_cache.length
    return session.cd_logits


def _commit(
    session: DecodeSession,
    config: DecodeConfig,
    backend: ModelBackend,
    staged: _StagedStep,
) -> StepTrace:
    session.current_logits = backend.append_chunk(session.main_cache, [staged.token])
    session.staged = None
    session.window.push(staged.confidence)
    session.generated.append(staged.token)
    session.traces.append(staged.trace)
    session.step += 1
    if staged.closes_region:
        session.region_open = False
    if staged.token == session.vocab.eos_id or session.step >= config.max_new_tokens:
        session.finished = True
    return staged.trace


def decode(
    config: DecodeConfig, prompt: Sequence[int], backend: ModelBackend
) -> Trajectory:
    """Decode until EOS or the token budget and return the full trajectory."""
    session = DecodeSession(config, prompt, backend)
    while not session.finished:
        step(session, config, backend)
    info = session.vocab
    return Trajectory(
        prompt=session.prompt,
        generated=session.generated,
        traces=session.traces,
        config=config,
        vocab={
            "vocab_size": info.vocab_size,
            "placeholder_id": info.placeholder_id,
            "eos_id": info.eos_id,
            "region_end_id": info.region_end_id,
        },
    )
