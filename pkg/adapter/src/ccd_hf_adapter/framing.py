"""Transport layer of the ccd/1 protocol.

A frame is a little-endian u32 byte length followed by that many bytes of
UTF-8 JSON encoding exactly one object. Responses are written in canonical
form (sorted keys, no whitespace) so a conversation replays byte for byte.
Logit vectors travel as base64 over raw little-endian float32 bytes; higher
precision servers round to float32 exactly once, at serialization.
"""

from __future__ import annotations

import base64
import binascii
import json
import struct
from typing import BinaryIO

import numpy as np

PROTOCOL_VERSION = "ccd/1"
MAX_FRAME_BYTES = 16 * 1024 * 1024

_HEADER = struct.Struct("<I")


class FramingError(Exception):
    """A frame could not be decoded; the connection must close."""


def encode_message(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_frame(fp: BinaryIO, obj: dict) -> None:
    payload = encode_message(obj)
    if len(payload) > MAX_FRAME_BYTES:
        raise ValueError(f"frame of {len(payload)} bytes exceeds the protocol limit")
    fp.write(_HEADER.pack(len(payload)) + payload)
    fp.flush()


def _read_exact(fp: BinaryIO, n: int) -> bytes:
    # socket file objects may return short reads; keep going until EOF
    chunks = []
    remaining = n
    while remaining:
        chunk = fp.read(remaining)
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(fp: BinaryIO) -> dict | None:
    """Decode the next request object; None at a clean end of stream."""
    header = _read_exact(fp, _HEADER.size)
    if not header:
        return None
    if len(header) < _HEADER.size:
        raise FramingError("truncated frame header")
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise FramingError(f"frame of {length} bytes exceeds the protocol limit")
    body = _read_exact(fp, length)
    if len(body) < length:
        raise FramingError("truncated frame body")
    try:
        obj = json.loads(body.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise FramingError(f"frame is not valid UTF-8: {exc}") from exc
    except ValueError as exc:
        raise FramingError(f"frame is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise FramingError("frame must encode a JSON object")
    return obj


def encode_logits(vec: np.ndarray) -> str:
    """Base64 payload for one logit vector, rounded to float32 once."""
    arr = np.ascontiguousarray(vec, dtype="<f4")
    if arr.ndim != 1:
        raise ValueError("logit payloads are one-dimensional")
    return base64.b64encode(arr.tobytes()).decode("ascii")


def decode_logits(text: str, expected_size: int | None = None) -> np.ndarray:
    try:
        raw = base64.b64decode(text.encode("ascii"), validate=True)
    except (UnicodeEncodeError, binascii.Error) as exc:
        raise ValueError(f"logits payload is not valid base64: {exc}") from exc
    if len(raw) % 4:
        raise ValueError(f"logits payload of {len(raw)} bytes is not float32-aligned")
    vec = np.frombuffer(raw, dtype="<f4")
    if expected_size is not None and vec.size != expected_size:
        raise ValueError(f"expected {expected_size} logits, payload holds {vec.size}")
    return vec
