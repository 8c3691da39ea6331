"""NumPy reference implementation of the per-step logit kernels.

These functions are the hot path of the decoding loop: every generated token
evaluates a handful of vocabulary-sized reductions. The compiled extension in
``_fast.pyx`` mirrors this module one-to-one; this module is the always
available fallback and the behavioral reference.

All kernels take 1-D float64 C-contiguous arrays of finite values. Input
validation belongs to the public wrappers, not here.
"""

from __future__ import annotations

import numpy as np

IMPLEMENTATION = "pure"


def logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    return m + float(np.log(np.sum(np.exp(x - m))))


def log_softmax(x: np.ndarray) -> np.ndarray:
    return x - logsumexp(x)


def softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - np.max(x))
    return e / e.sum()


def token_confidence(x: np.ndarray, k: int) -> float:
    """Negative mean log-probability of the k most likely tokens.

    Equal logits contribute equal log-probabilities, so the value does not
    depend on how ties are ordered. For k exceeding the vocabulary the mean
    runs over the whole vocabulary.
    """
    n = x.shape[0]
    kk = min(k, n)
    top = np.partition(x, n - kk)[n - kk:]
    # log p_j = x_j - logsumexp(x); mean over the top-kk entries
    return logsumexp(x) - float(top.sum()) / kk


def entropy(x: np.ndarray) -> float:
    """Shannon entropy in nats of softmax(x)."""
    logp = log_softmax(x)
    p = np.exp(logp)
    return float(-(p * logp).sum())


def top_margin(x: np.ndarray) -> float:
    """Largest logit minus second largest."""
    n = x.shape[0]
    two = np.partition(x, n - 2)[n - 2:]
    return float(np.max(two) - np.min(two))


def fuse(main: np.ndarray, contrast: np.ndarray, alpha: float) -> np.ndarray:
    """Contrastive combination (1 + alpha) * main - alpha * contrast."""
    return (1.0 + alpha) * main - alpha * contrast


def clamp(x: np.ndarray, limit: float) -> tuple[np.ndarray, bool]:
    """Clip to [-limit, limit]; reports whether anything was clipped."""
    clipped = np.clip(x, -limit, limit)
    return clipped, bool(np.any(clipped != x))
