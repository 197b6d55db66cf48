"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericalError -> 3.
"""

from __future__ import annotations


class ChronotagError(Exception):
    """Base class for all package errors."""


class ConfigError(ChronotagError):
    """Invalid configuration or usage (bad keys, ratios, unknown model names)."""


class DataError(ChronotagError):
    """Invalid input data (malformed corpus files, bad spans, empty splits)."""


class CorpusFormatError(DataError):
    """A corpus stream could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SpanError(DataError):
    """A standoff span violates the paragraph invariants."""


class CorruptAnnotationError(DataError):
    """A marker transformation would change an entity's surface text."""


class CheckpointError(DataError):
    """A model checkpoint file is missing, truncated, or of the wrong format."""


class NumericalError(ChronotagError):
    """Training diverged or a numeric routine left its supported domain."""
