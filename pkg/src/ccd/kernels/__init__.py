"""Kernel selection: compiled extension when built, NumPy fallback otherwise.

Set ``CCD_KERNELS=pure`` to force the fallback, ``CCD_KERNELS=fast`` to
require the extension (ImportError if it was not built). The default
(``auto``) prefers the extension. ``implementation()`` reports which one is
live; ``implementations()`` exposes both for differential tests and the
benchmark.
"""

from __future__ import annotations

import importlib
import os

from . import _pure

_mode = os.environ.get("CCD_KERNELS", "auto")
if _mode not in ("auto", "fast", "pure"):
    raise ValueError(f"CCD_KERNELS must be auto, fast, or pure; got {_mode!r}")

_fast = None
if _mode != "pure":
    try:
        # import_module, not `from . import`: this module defines a `_fast`
        # attribute, which `from . import _fast` would silently return
        # instead of importing the extension.
        _fast = importlib.import_module("ccd.kernels._fast")
    except ImportError:
        if _mode == "fast":
            raise ImportError(
                "CCD_KERNELS=fast but the compiled extension is not built; "
                "reinstall with a C compiler or use CCD_KERNELS=pure"
            ) from None

_active = _fast if _fast is not None else _pure

logsumexp = _active.logsumexp
log_softmax = _active.log_softmax
softmax = _active.softmax
token_confidence = _active.token_confidence
entropy = _active.entropy
top_margin = _active.top_margin
fuse = _active.fuse
clamp = _active.clamp


def implementation() -> str:
    """Name of the live kernel set, "fast" or "pure"."""
    return _active.IMPLEMENTATION


def implementations() -> dict[str, object]:
    """All importable kernel modules keyed by name."""
    out: dict[str, object] = {"pure": _pure}
    if _fast is not None:
        out["fast"] = _fast
    return out
