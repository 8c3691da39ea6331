"""Backend registry and selector parsing."""

from __future__ import annotations

import os

from ccd.backends.base import CacheHandle, ModelBackend, VocabInfo
from ccd.backends.mock import MockBackend, scenario
from ccd.backends.toy import ToyBackend

__all__ = [
    "CacheHandle",
    "ModelBackend",
    "MockBackend",
    "ToyBackend",
    "VocabInfo",
    "default_selector",
    "resolve_backend",
    "scenario",
]

_DEFAULT = "toy:0"


def default_selector() -> str:
    """Selector used when none is given: $CCD_BACKEND, else ``toy:0``."""
    return os.environ.get("CCD_BACKEND", _DEFAULT)


def resolve_backend(selector: str | None = None) -> ModelBackend:
    """Build a backend from a ``kind:argument`` selector string.

    Supported kinds: ``mock:<scenario>``, ``toy:<seed>``,
    ``remote:<host:port or unix:/path>``.
    """
    sel = selector if selector is not None else default_selector()
    kind, sep, arg = sel.partition(":")
    if not sep:
        raise ValueError(f"backend selector {sel!r} is missing ':'")
    if kind == "mock":
        return scenario(arg)
    if kind == "toy":
        try:
            seed = int(arg)
        except ValueError:
            raise ValueError(f"toy backend needs an integer seed, got {arg!r}")
        return ToyBackend(seed)
    if kind == "remote":
        from ccd.protocol.client import RemoteBackend

        return RemoteBackend.connect(arg)
    raise ValueError(f"unknown backend kind {kind!r} in selector {sel!r}")
