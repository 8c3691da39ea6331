"""Wire protocol: framing, reference server, and remote-backend client."""

from ccd.protocol.client import FrameTransport, RemoteBackend
from ccd.protocol.framing import (
    MAX_FRAME_BYTES,
    PROTOCOL_VERSION,
    decode_logits,
    encode_frame,
    encode_logits,
    read_frame,
    write_frame,
)
from ccd.protocol.server import ConnectionState, TCPLogitServer, serve_stream

__all__ = [
    "ConnectionState",
    "FrameTransport",
    "MAX_FRAME_BYTES",
    "PROTOCOL_VERSION",
    "RemoteBackend",
    "TCPLogitServer",
    "decode_logits",
    "encode_frame",
    "encode_logits",
    "read_frame",
    "serve_stream",
    "write_frame",
]
