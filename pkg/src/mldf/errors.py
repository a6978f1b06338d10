"""Exception types shared across the package."""


class MLDFError(Exception):
    """Base class for all package errors."""


class DataError(MLDFError):
    """Input data cannot be used."""


class ParseError(DataError):
    """Malformed input text. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DataError):
    """Well-formed input that violates the dataset schema."""


class UndefinedMeasureError(MLDFError, ValueError):
    """A measure has no defined value on the given input."""


class ConfigError(MLDFError, ValueError):
    """Invalid model or run configuration."""


class VersionError(MLDFError):
    """Persisted model written by an unknown format version."""
