"""Exception types shared across the package."""


class TwdglmError(Exception):
    """Base class for all package-specific errors."""


class DomainError(TwdglmError, ValueError):
    """A value lies outside the support / mean space / link domain."""


class ConfigError(TwdglmError, ValueError):
    """Invalid model or run configuration."""


class SchemaError(TwdglmError, ValueError):
    """Malformed input file (missing columns, bad cells, unknown labels)."""


class SeriesInfeasibleError(TwdglmError, RuntimeError):
    """The Bessel-series window is too large to sum; use the saddlepoint path."""


class NonFiniteError(TwdglmError, RuntimeError):
    """A likelihood quantity became non-finite.

    Carries the index of the first offending row when known.
    """

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"{message} (row {row})")
        self.row = row


class SingularSystemError(TwdglmError, RuntimeError):
    """A linear system could not be factorized.

    ``smallest_pivot`` holds the magnitude of the smallest pivot seen;
    ``null_hint`` an approximate null-space vector when available.
    """

    def __init__(self, message: str, smallest_pivot: float | None = None,
                 null_hint=None):
        if smallest_pivot is not None:
            message = f"{message} (smallest pivot {smallest_pivot:.3e})"
        super().__init__(message)
        self.smallest_pivot = smallest_pivot
        self.null_hint = null_hint


class ScalingError(TwdglmError, RuntimeError):
    """No majorization constant found after the doubling budget."""

    def __init__(self, message: str, reason: str = "no-decrease"):
        super().__init__(message)
        self.reason = reason


class CalibrationError(TwdglmError, RuntimeError):
    """Synthetic-data intercept calibration could not reach its target."""
