"""
Error Types for funkrad

Every failure the library reports belongs to one of two families: validation
errors (bad input, exit status 2 on the command line) and numerical errors
(the computation itself broke down, exit status 3).
"""

from typing import Any, Optional


class FunkError(Exception):
    """Base class for all funkrad errors."""

    kind = "error"


class FunkValidationError(FunkError, ValueError):
    """Input rejected before or during computation."""

    kind = "validation"


class DegenerateInputError(FunkValidationError):
    kind = "degenerate-input"


class ShapeMismatchError(FunkValidationError):
    kind = "shape-mismatch"


class GeometryMismatchError(FunkValidationError):
    kind = "geometry-mismatch"


class MalformedHeaderError(FunkValidationError):
    kind = "malformed-header"


class DimensionMismatchError(FunkValidationError):
    kind = "dimension-mismatch"


class NonFiniteValueError(FunkValidationError):
    kind = "non-finite-value"


class SupportViolationError(FunkValidationError):
    kind = "support-violation"


class TooLargeError(FunkValidationError):
    kind = "too-large"


class FrequencyTooLowError(FunkValidationError):
    kind = "frequency-too-low"


class PartialScanUnsupportedError(FunkValidationError):
    kind = "partial-scan-unsupported"


class FunkNumericalError(FunkError, ArithmeticError):
    """The numerics failed on otherwise valid input."""

    kind = "numerical"


class ConjugateFailureError(FunkNumericalError):
    kind = "conjugate-failure"


class NoConvergenceError(FunkNumericalError):
    """CG hit its iteration cap; `result` holds the last iterate and its residual."""

    kind = "no-convergence"

    def __init__(self, message: str, result: Optional[Any] = None):
        super().__init__(message)
        self.result = result
