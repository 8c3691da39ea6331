"""Protocol state machine and servers.

One connection talks to one handler; sessions are scoped to their
connection and requests are answered strictly in order, so per-session
operations are serialized without locking. The server never masks or fuses;
it absorbs exactly the token ids clients send and returns next-position
logits per branch.
"""

from __future__ import annotations

import socketserver
import threading
from typing import BinaryIO

from ccd_hf_adapter.framing import (
    PROTOCOL_VERSION,
    FramingError,
    encode_logits,
    read_frame,
    write_frame,
)
from ccd_hf_adapter.model import CheckpointRunner
from ccd_hf_adapter.sessions import BRANCH_NAMES, AdapterSession


class RequestError(Exception):
    """Failure answered with a protocol error response."""

    def __init__(self, code: str, message: str) -> None:
        super().__init__(message)
        self.code = code
        self.message = message


def _error(code: str, message: str, rid: int) -> dict:
    return {"type": "error", "id": rid, "code": code, "message": message}


def _int_list(value, what: str) -> list[int]:
    if not isinstance(value, list) or any(
        not isinstance(t, int) or isinstance(t, bool) for t in value
    ):
        raise RequestError("bad-request", f"{what} must be an array of integers")
    return value


class ConnectionHandler:
    """Per-connection protocol state; transport-agnostic."""

    def __init__(self, runner: CheckpointRunner, model_name: str | None = None) -> None:
        self.runner = runner
        self.model_name = model_name if model_name is not None else runner.model_id
        self.greeted = False
        self.sessions: dict[str, AdapterSession] = {}
        self._next_session = 1

    def handle(self, obj: dict) -> dict:
        rid = obj.get("id")
        if not isinstance(rid, int) or isinstance(rid, bool):
            return _error("bad-request", "request id must be an integer", 0)
        mtype = obj.get("type")
        if not isinstance(mtype, str):
            return _error("bad-request", "request type must be a string", rid)
        try:
            return self._dispatch(mtype, obj, rid)
        except RequestError as exc:
            return _error(exc.code, exc.message, rid)
        except Exception as exc:  # session state unspecified per protocol
            return _error("internal", f"unexpected failure: {exc}", rid)

    def _dispatch(self, mtype: str, obj: dict, rid: int) -> dict:
        if mtype == "hello":
            version = obj.get("version")
            if version != PROTOCOL_VERSION:
                raise RequestError(
                    "version-mismatch",
                    f"server speaks {PROTOCOL_VERSION}, client sent {version!r}",
                )
            self.greeted = True
            return {
                "type": "hello_ok",
                "id": rid,
                "version": PROTOCOL_VERSION,
                "model": self.model_name,
                "vocab_size": self.runner.vocab_size,
                "placeholder_id": self.runner.placeholder_id,
                "eos_id": self.runner.eos_id,
                "region_end_id": None,
            }
        if not self.greeted:
            raise RequestError("bad-request", "hello handshake required first")

        if mtype == "create_session":
            prompt = self._checked_tokens(obj.get("prompt"), "prompt", "init_cache", 0)
            session = AdapterSession(f"s{self._next_session}")
            logits = session.prime(self.runner, prompt)
            self._next_session += 1
            self.sessions[session.session_id] = session
            return {
                "type": "session_ok",
                "id": rid,
                "session_id": session.session_id,
                "lengths": session.lengths(),
                "logits": encode_logits(logits),
            }
        if mtype == "append":
            session, sid = self._session_for(obj)
            branch = obj.get("branch")
            if branch not in BRANCH_NAMES:
                raise RequestError("unknown-branch", f"no branch {branch!r}")
            state = session.branches[branch]
            tokens = self._checked_tokens(
                obj.get("tokens"), "tokens", "append_chunk", state.length
            )
            logits = self.runner.feed(state, tokens)
            return {
                "type": "logits",
                "id": rid,
                "branch": branch,
                "length": state.length,
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
            tokens = self._checked_tokens(prompt, "prompt", "init_cache", 0)
            logits = session.prime(self.runner, tokens)
            return {
                "type": "session_ok",
                "id": rid,
                "session_id": sid,
                "lengths": session.lengths(),
                "logits": encode_logits(logits),
            }
        if mtype == "close":
            session, sid = self._session_for(obj)
            del self.sessions[sid]
            return {"type": "session_ok", "id": rid, "session_id": sid, "closed": True}
        raise RequestError("bad-request", f"unknown request type {mtype!r}")

    def _checked_tokens(
        self, value, what: str, context: str, base_length: int
    ) -> list[int]:
        """Validate fully before any forward pass so failures mutate nothing."""
        tokens = _int_list(value, what)
        if not tokens:
            raise RequestError("empty-prefix", f"{context}: token sequence is empty")
        vocab = self.runner.vocab_size
        for token in tokens:
            if not 0 <= token < vocab:
                raise RequestError(
                    "token-out-of-range",
                    f"{context}: token {token} outside vocabulary of size {vocab}",
                )
        limit = self.runner.max_positions
        if limit and base_length + len(tokens) > limit:
            raise RequestError(
                "internal",
                f"{context}: history of {base_length + len(tokens)} tokens "
                f"exceeds the model's {limit} positions",
            )
        return tokens

    def _session_for(self, obj: dict) -> tuple[AdapterSession, str]:
        sid = obj.get("session_id")
        session = self.sessions.get(sid) if isinstance(sid, str) else None
        if session is None:
            raise RequestError("unknown-session", f"no session {sid!r}")
        return session, sid


def serve_stream(
    runner: CheckpointRunner,
    rfp: BinaryIO,
    wfp: BinaryIO,
    *,
    model_name: str | None = None,
) -> None:
    """Answer frames on a stream pair until EOF or a framing error."""
    handler = ConnectionHandler(runner, model_name)
    while True:
        try:
            obj = read_frame(rfp)
        except FramingError as exc:
            try:
                write_frame(wfp, _error("malformed-frame", str(exc), 0))
            except OSError:
                pass
            return
        if obj is None:
            return
        try:
            write_frame(wfp, handler.handle(obj))
        except OSError:
            return


class TCPAdapterServer:
    """Threaded TCP front end; one worker per connection, shared model."""

    def __init__(
        self,
        runner: CheckpointRunner,
        host: str = "127.0.0.1",
        port: int = 0,
        *,
        model_name: str | None = None,
    ) -> None:
        outer = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self) -> None:
                serve_stream(
                    outer.runner, self.rfile, self.wfile, model_name=outer.model_name
                )

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self.runner = runner
        self.model_name = model_name
        self._server = Server((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return host, port

    def start(self) -> "TCPAdapterServer":
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="ccd-hf-adapter", daemon=True
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
