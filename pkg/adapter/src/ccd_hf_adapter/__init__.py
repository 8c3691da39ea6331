"""Transformers checkpoint server for the ccd/1 logit protocol.

The decoding engine talks to logit sources over a small framed-JSON wire
protocol (see docs/protocol.md at the repository root). This package puts a
real causal-LM checkpoint behind that protocol: dual-branch sessions over
incremental caches, deterministic numerics, and a tokenizer bridge for the
engine's id-based prompt files.
"""

__version__ = "0.1.0"

from ccd_hf_adapter.model import CheckpointRunner, DeterminismError
from ccd_hf_adapter.server import ConnectionHandler, TCPAdapterServer, serve_stream
from ccd_hf_adapter.sessions import AdapterSession

__all__ = [
    "AdapterSession",
    "CheckpointRunner",
    "ConnectionHandler",
    "DeterminismError",
    "TCPAdapterServer",
    "serve_stream",
    "__version__",
]
