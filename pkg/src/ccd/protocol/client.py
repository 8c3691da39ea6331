"""Client side of the wire protocol: a remote process as a ModelBackend.

The engine initializes its two branches with back-to-back init_cache calls
carrying the same prompt. The client maps that pair onto one protocol
session: the first call creates the session and binds the main branch, and
an immediately following call with an identical prefix claims the session's
contrastive branch without another round trip. Any other prefix starts a new
session.
"""

from __future__ import annotations

import socket
from typing import BinaryIO, Sequence

import numpy as np

from ccd.backends.base import CacheHandle, ModelBackend, VocabInfo
from ccd.errors import (
    BackendUnavailableError,
    EmptyPrefixError,
    ProtocolError,
    StaleHandleError,
    TokenOutOfRangeError,
)
from ccd.protocol.framing import (
    PROTOCOL_VERSION,
    decode_logits,
    read_frame,
    write_frame,
)

_ERROR_MAP = {
    "token-out-of-range": TokenOutOfRangeError,
    "empty-prefix": EmptyPrefixError,
    "unknown-session": StaleHandleError,
}


class FrameTransport:
    """Blocking request/response over a binary stream pair."""

    def __init__(self, rfp: BinaryIO, wfp: BinaryIO, sock: socket.socket | None = None):
        self._rfp = rfp
        self._wfp = wfp
        self._sock = sock
        self._next_id = 1

    def request(self, obj: dict) -> dict:
        rid = self._next_id
        self._next_id += 1
        obj = dict(obj, id=rid)
        write_frame(self._wfp, obj)
        resp = read_frame(self._rfp)
        if resp is None:
            raise ProtocolError("malformed-frame", "connection closed mid-request")
        if resp.get("id") != rid:
            raise ProtocolError(
                "malformed-frame", f"response id {resp.get('id')} != request id {rid}"
            )
        if resp.get("type") == "error":
            code = resp.get("code", "internal")
            message = resp.get("message", "")
            exc = _ERROR_MAP.get(code)
            if exc is not None:
                raise exc(message)
            raise ProtocolError(code, message)
        return resp

    def close(self) -> None:
        for closer in (self._rfp, self._wfp, self._sock):
            if closer is not None:
                try:
                    closer.close()
                except OSError:
                    pass


class _RemoteCache(CacheHandle):
    def __init__(self, owner: "RemoteBackend", session_id: str, branch: str) -> None:
        super().__init__(owner)
        self.session_id = session_id
        self.branch = branch


class RemoteBackend(ModelBackend):
    def __init__(self, transport: FrameTransport, *, model_name_hint: str = "") -> None:
        self._transport = transport
        resp = transport.request({"type": "hello", "version": PROTOCOL_VERSION})
        if resp.get("type") != "hello_ok" or resp.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(
                "version-mismatch", f"unexpected handshake reply: {resp}"
            )
        self.model_name = resp.get("model", model_name_hint)
        self._info = VocabInfo(
            vocab_size=resp["vocab_size"],
            placeholder_id=resp["placeholder_id"],
            eos_id=resp["eos_id"],
            region_end_id=resp.get("region_end_id"),
        )
        # (session_id, prompt, logits) of a session whose contrastive branch
        # has not been handed out yet
        self._pending_cd: tuple[str, tuple[int, ...], np.ndarray] | None = None

    @classmethod
    def connect(cls, address: str) -> "RemoteBackend":
        host, sep, port = address.rpartition(":")
        if not sep or not port.isdigit():
            raise ValueError(f"remote address must be host:port, got {address!r}")
        try:
            sock = socket.create_connection((host, int(port)), timeout=30)
        except OSError as exc:
            raise BackendUnavailableError(f"cannot connect to {address}: {exc}")
        return cls(FrameTransport(sock.makefile("rb"), sock.makefile("wb"), sock))

    @classmethod
    def over_streams(cls, rfp: BinaryIO, wfp: BinaryIO) -> "RemoteBackend":
        return cls(FrameTransport(rfp, wfp))

    def vocab_info(self) -> VocabInfo:
        return self._info

    def init_cache(self, prefix: Sequence[int]) -> tuple[CacheHandle, np.ndarray]:
        toks = self._require_tokens(prefix, context="init_cache")
        key = tuple(toks)
        if self._pending_cd is not None:
            sid, prompt, logits = self._pending_cd
            self._pending_cd = None
            if prompt == key:
                cache = _RemoteCache(self, sid, "cd")
                cache.length = len(toks)
                return cache, logits.copy()
        resp = self._transport.request({"type": "create_session", "prompt": toks})
        logits = decode_logits(resp["logits"]).astype(np.float64)
        sid = resp["session_id"]
        self._pending_cd = (sid, key, logits)
        cache = _RemoteCache(self, sid, "main")
        cache.length = resp["lengths"]["main"]
        return cache, logits.copy()

    def append_chunk(self, cache: CacheHandle, tokens: Sequence[int]) -> np.ndarray:
        self._require_owned(cache)
        assert isinstance(cache, _RemoteCache)
        toks = self._require_tokens(tokens, context="append_chunk")
        resp = self._transport.request(
            {
                "type": "append",
                "session_id": cache.session_id,
                "branch": cache.branch,
                "tokens": toks,
            }
        )
        cache.length = resp["length"]
        return decode_logits(resp["logits"]).astype(np.float64)

    def close(self) -> None:
        self._transport.close()

    def __enter__(self) -> "RemoteBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
