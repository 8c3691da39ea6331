"""Exception hierarchy shared across backends, engine, protocol, and CLI."""


class CCDError(Exception):
    """Base class for all package-specific errors."""


class BackendError(CCDError):
    """Base class for model-backend failures."""


class BackendUnavailableError(BackendError):
    """The backend cannot serve requests (not initialized, connection lost)."""


class TokenOutOfRangeError(BackendError):
    """A token id falls outside the backend vocabulary."""


class EmptyPrefixError(BackendError):
    """Cache initialization was attempted with an empty token sequence."""


class StaleHandleError(BackendError):
    """A cache handle does not belong to this backend or was invalidated."""


class ContextOverflowError(BackendError):
    """The token history exceeds the backend's maximum context length."""


class ProtocolError(CCDError):
    """Wire-protocol violation (framing, versioning, or message shape)."""

    def __init__(self, code: str, message: str) -> None:
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class TraceSchemaError(CCDError):
    """A persisted trace or report carries an unsupported schema version."""


class NoInterventionsError(CCDError):
    """An aggregate over intervention steps was requested but none exist."""
