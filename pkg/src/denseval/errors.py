"""Exception types shared across the toolkit.

Everything raised on purpose derives from DensevalError so the CLI can map
tool failures to exit code 1 while genuine bugs still produce tracebacks.
"""


class DensevalError(Exception):
    """Base class for all toolkit errors."""


class ParseError(DensevalError):
    """Malformed record in an input file."""

    def __init__(self, path, lineno: int, message: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class DuplicateIdError(DensevalError):
    """An id (or keyed record) occurs more than once where uniqueness is required."""


class ReferentialIntegrityError(DensevalError):
    """A record references an id that does not exist."""


class UnknownIdError(DensevalError):
    """Lookup of an id that is not present in the queried collection."""


class IntegrityError(DensevalError):
    """Inconsistent data: dimension mismatch, zero vector, response shape, ..."""


class FileFormatError(DensevalError):
    """Corrupt header, truncated payload, or trailing bytes in a structured file."""


class TransportError(DensevalError):
    """A remote call failed after exhausting its retry budget."""


class CoverageError(DensevalError):
    """A run does not cover the query set it is evaluated against."""


class UndefinedMetricError(DensevalError):
    """Metric requested for a query with no positive labels (caller must filter)."""
