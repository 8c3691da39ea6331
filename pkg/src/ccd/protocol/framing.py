"""Length-prefixed JSON framing and logit payload codec.

A frame is a 4-byte little-endian unsigned length followed by that many
bytes of UTF-8 JSON encoding one object. Responses are written in canonical
form (sorted keys, no whitespace) so a recorded conversation is reproducible
byte for byte.

Logit vectors travel as base64-encoded little-endian IEEE-754 32-bit floats.
"""

from __future__ import annotations

import base64
import json
import struct
from typing import BinaryIO

import numpy as np

from ccd.errors import ProtocolError

PROTOCOL_VERSION = "ccd/1"
MAX_FRAME_BYTES = 16 * 1024 * 1024

_LEN = struct.Struct("<I")


def encode_frame(obj: dict) -> bytes:
    body = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_FRAME_BYTES:
        raise ProtocolError("malformed-frame", "frame exceeds size limit")
    return _LEN.pack(len(body)) + body


def write_frame(fp: BinaryIO, obj: dict) -> None:
    fp.write(encode_frame(obj))
    fp.flush()


def _read_exact(fp: BinaryIO, n: int) -> bytes | None:
    chunks = b""
    while len(chunks) < n:
        got = fp.read(n - len(chunks))
        if not got:
            if chunks:
                raise ProtocolError("malformed-frame", "stream truncated mid-frame")
            return None
        chunks += got
    return chunks


def read_frame(fp: BinaryIO) -> dict | None:
    """Next frame's object, or None on clean end of stream."""
    header = _read_exact(fp, _LEN.size)
    if header is None:
        return None
    (length,) = _LEN.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise ProtocolError("malformed-frame", f"frame length {length} exceeds limit")
    body = _read_exact(fp, length)
    if body is None:
        raise ProtocolError("malformed-frame", "stream truncated mid-frame")
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError("malformed-frame", f"frame is not valid JSON: {exc}")
    if not isinstance(obj, dict):
        raise ProtocolError("malformed-frame", "frame must encode a JSON object")
    return obj


def encode_logits(logits: np.ndarray) -> str:
    arr = np.ascontiguousarray(logits, dtype="<f4")
    return base64.b64encode(arr.tobytes()).decode("ascii")


def decode_logits(payload: str) -> np.ndarray:
    try:
        raw = base64.b64decode(payload.encode("ascii"), validate=True)
    except Exception as exc:
        raise ProtocolError("malformed-frame", f"bad logits payload: {exc}")
    if len(raw) % 4:
        raise ProtocolError("malformed-frame", "logits payload is not float32-aligned")
    return np.frombuffer(raw, dtype="<f4").copy()
