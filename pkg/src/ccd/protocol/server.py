"""Reference logit server exposing a local backend over the wire protocol.

One connection talks to one handler; sessions live for the life of their
connection and requests are answered strictly in order, so per-session
serialization needs no locking. The server performs no masking or fusion;
it only absorbs the token ids clients send (placeholders included) and
returns next-position logits per branch.
"""

from __future__ import annotations

import socketserver
import threading
from typing import BinaryIO

from ccd.backends.base import CacheHandle, ModelBackend
from ccd.errors import (
    CCDError,
    ContextOverflowError,
    EmptyPrefixError,
    ProtocolError,
    TokenOutOfRangeError,
)
from ccd.protocol.framing import (
    PROTOCOL_VERSION,
    encode_logits,
    read_frame,
    write_frame,
)

BRANCHES = ("main", "cd")


class _Session:
    def __init__(self, backend: ModelBackend, prompt: list[int]) -> None:
        self.caches: dict[str, CacheHandle] = {}
        self.logits = {}
        for branch in BRANCHES:
            self.caches[branch], self.logits[branch] = backend.init_cache(prompt)

    def lengths(self) -> dict[str, int]:
        return {b: self.caches[b].length for b in BRANCHES}


def _request_error(code: str, message: str, rid: int) -> dict:
    return {"type": "error", "id": rid, "code": code, "message": message}


def _int_list(value, what: str) -> list[int]:
    if not isinstance(value, list) or any(
        not isinstance(t, int) or isinstance(t, bool) for t in value
    ):
        raise ProtocolError("bad-request", f"{what} must be an array of integers")
    return value


class ConnectionState:
    """Per-connection protocol state machine; transport-agnostic."""

    def __init__(self, backend: ModelBackend, model_name: str) -> None:
        self.backend = backend
        self.model_name = model_name
        self.greeted = False
        self.sessions: dict[str, _Session] = {}
        self._next_session = 1

    def handle(self, obj: dict) -> dict:
        rid = obj.get("id")
        if not isinstance(rid, int) or isinstance(rid, bool):
            return _request_error("bad-request", "request id must be an integer", 0)
        mtype = obj.get("type")
        if not isinstance(mtype, str):
            return _request_error("bad-request", "request type must be a string", rid)
        try:
            return self._dispatch(mtype, obj, rid)
        except ProtocolError as exc:
            return _request_error(exc.code, exc.message, rid)
        except TokenOutOfRangeError as exc:
            return _request_error("token-out-of-range", str(exc), rid)
        except EmptyPrefixError as exc:
            return _request_error("empty-prefix", str(exc), rid)
        except (CCDError, ContextOverflowError) as exc:
            return _request_error("internal", str(exc), rid)
        except Exception as exc:  # pragma: no cover - defensive
            return _request_error("internal", f"unexpected failure: {exc}", rid)

    def _dispatch(self, mtype: str, obj: dict, rid: int) -> dict:
        if mtype == "hello":
            version = obj.get("version")
            if version != PROTOCOL_VERSION:
                raise ProtocolError(
                    "version-mismatch",
                    f"server speaks {PROTOCOL_VERSION}, client sent {version!r}",
                )
            self.greeted = True
            info = self.backend.vocab_info()
            return {
                "type": "hello_ok",
                "id": rid,
                "version": PROTOCOL_VERSION,
                "model": self.model_name,
                "vocab_size": info.vocab_size,
                "placeholder_id": info.placeholder_id,
                "eos_id": info.eos_id,
                "region_end_id": info.region_end_id,
            }
        if not self.greeted:
            raise ProtocolError("bad-request", "hello handshake required first")

        if mtype == "create_session":
            prompt = _int_list(obj.get("prompt"), "prompt")
            session = _Session(self.backend, prompt)
            sid = f"s{self._next_session}"
            self._next_session += 1
            self.sessions[sid] = session
            return {
                "type": "session_ok",
                "id": rid,
                "session_id": sid,
                "lengths": session.lengths(),
                "logits": encode_logits(session.logits["main"]),
            }
        if mtype == "append":
            session, sid = self._session_for(obj)
            branch = obj.get("branch")
            if branch not in BRANCHES:
                raise ProtocolError("unknown-branch", f"no branch {branch!r}")
            tokens = _int_list(obj.get("tokens"), "tokens")
            logits = self.backend.append_chunk(session.caches[branch], tokens)
            session.logits[branch] = logits
            return {
                "type": "logits",
                "id": rid,
                "branch": branch,
                "length": session.caches[branch].length,
                "logits": encode_logits(logits),
            }
        if mtype == "reset":
            session, sid = self._session_for(obj)
            prompt = obj.get("prompt")
            if prompt is None:
                return {
                    "type": "session_ok",
                    "id": rid,
                    "session_id": sid,
                    "lengths": session.lengths(),
                }
            fresh = _Session(self.backend, _int_list(prompt, "prompt"))
            self.sessions[sid] = fresh
            return {
                "type": "session_ok",
                "id": rid,
                "session_id": sid,
                "lengths": fresh.lengths(),
                "logits": encode_logits(fresh.logits["main"]),
            }
        if mtype == "close":
            session, sid = self._session_for(obj)
            del self.sessions[sid]
            return {"type": "session_ok", "id": rid, "session_id": sid, "closed": True}
        raise ProtocolError("bad-request", f"unknown request type {mtype!r}")

    def _session_for(self, obj: dict) -> tuple[_Session, str]:
        sid = obj.get("session_id")
        session = self.sessions.get(sid) if isinstance(sid, str) else None
        if session is None:
            raise ProtocolError("unknown-session", f"no session {sid!r}")
        return session, sid


def serve_stream(
    backend: ModelBackend,
    rfp: BinaryIO,
    wfp: BinaryIO,
    *,
    model_name: str = "local",
) -> None:
    """Answer frames on a stream pair until EOF or a framing error."""
    state = ConnectionState(backend, model_name)
    while True:
        try:
            obj = read_frame(rfp)
        except ProtocolError as exc:
            try:
                write_frame(wfp, _request_error(exc.code, exc.message, 0))
            except OSError:
                pass
            return
        if obj is None:
            return
        try:
            write_frame(wfp, state.handle(obj))
        except OSError:
            return


class TCPLogitServer:
    """Threaded TCP server for tests and the serve command."""

    def __init__(
        self,
        backend: ModelBackend,
        host: str = "127.0.0.1",
        port: int = 0,
        *,
        model_name: str = "local",
    ) -> None:
        outer = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self) -> None:
                serve_stream(
                    outer.backend, self.rfile, self.wfile, model_name=outer.model_name
                )

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self.backend = backend
        self.model_name = model_name
        self._server = Server((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return host, port

    def start(self) -> "TCPLogitServer":
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="ccd-logit-server", daemon=True
        )
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
