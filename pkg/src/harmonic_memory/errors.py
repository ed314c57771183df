"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""


class NotFoundError(EngineError, KeyError):
    """An id did not resolve to a stored record."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class DuplicateIdError(EngineError, ValueError):
    pass


class ValidationError(EngineError, ValueError):
    """A precondition on an input record or parameter was violated."""


class SnapshotError(EngineError):
    """Snapshot file is unreadable, corrupt, or of an unsupported version."""


class DimensionMismatchError(EngineError, ValueError):
    pass


class ZeroVectorError(EngineError, ValueError):
    pass


class ProviderError(EngineError):
    """An external provider (chat or embedding) failed after retries."""


class ConfigError(EngineError):
    pass


class ActionError(EngineError, ValueError):
    """An action is not valid for the current retrieval state."""


class StoreBusyError(EngineError):
    """The store lock could not be taken within the allowed wait."""
