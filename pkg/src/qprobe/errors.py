"""Exception types shared across the toolkit.

Everything user-facing derives from QprobeError so the CLI can map
validation problems to exit code 1 and keep genuine runtime failures at 2.
"""


class QprobeError(Exception):
    """Base class for all toolkit errors."""


class ParseError(QprobeError):
    """Malformed input file (CoNLL-U column count, bad field types)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TreeValidationError(QprobeError):
    """Dependency structure violates the single-rooted-tree contract."""


class FormatError(QprobeError):
    """Record in an interchange file does not match the documented schema."""


class ConfigError(QprobeError):
    """Invalid rule pack or experiment configuration."""


class UndefinedMetricError(QprobeError):
    """A complexity metric has no defined value for this sentence."""


class DataError(QprobeError):
    """Model input fails a precondition (shape mismatch, non-finite values)."""


class DivergenceError(QprobeError):
    """Training produced a non-finite loss."""
