"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class CodiqError(Exception):
    """Base class for all engine errors."""


class DomainError(CodiqError, ValueError):
    """An argument fell outside its documented domain."""


class ConfigError(CodiqError):
    """Invalid or incomplete configuration, detected before any remote call."""


class ProviderError(CodiqError):
    """A model endpoint failed after the retry budget was spent."""


class ProviderTimeout(ProviderError):
    """The endpoint did not answer within the configured timeout."""


class ScriptExhausted(ProviderError):
    """A scripted mock ran out of entries for the requested tag."""


class ProtocolError(CodiqError):
    """The model never produced a parseable response within the retry budget."""


class ValidationError(CodiqError):
    """The model produced parseable output that violates the protocol contract."""


class JsonNotFound(CodiqError):
    """No balanced JSON candidate in the text parses."""


class SchemaError(CodiqError):
    """A persisted record violates the corpus schema.

    ``line`` is the 1-based line number in the offending file, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
