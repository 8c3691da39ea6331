"""Confidence-driven contrastive decoding engine."""

from ccd.backends import resolve_backend
from ccd.confidence import ConfidenceWindow, Thresholds, token_confidence
from ccd.engine import (
    DecodeConfig,
    DecodeSession,
    RegionSpec,
    SamplerSpec,
    StepTrace,
    Trajectory,
    contrastive_token,
    decode,
    fuse_logits,
    sample,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "ConfidenceWindow",
    "DecodeConfig",
    "DecodeSession",
    "RegionSpec",
    "SamplerSpec",
    "StepTrace",
    "Thresholds",
    "Trajectory",
    "__version__",
    "contrastive_token",
    "decode",
    "fuse_logits",
    "resolve_backend",
    "sample",
    "step",
    "token_confidence",
]
