"""Exception types shared across the package."""


class TypimpError(Exception):
    """Base class for all package errors."""


class ParseError(TypimpError):
    """Malformed input file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(TypimpError):
    """Input is well formed but violates a contract."""


class NumericError(TypimpError):
    """A numerical procedure failed (no root, degenerate sampler state)."""


class ConfigError(TypimpError):
    """Invalid run configuration."""
