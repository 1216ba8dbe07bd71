"""Exception hierarchy."""


class FbdsError(Exception):
    """Base class for all package errors."""


class ValidationError(FbdsError, ValueError):
    """Malformed input or parameter."""


class DimensionError(ValidationError):
    """Array shapes do not conform."""


class DomainError(ValidationError):
    """A value lies outside the domain of a transform (e.g. log of a non-positive price)."""


class DegenerateScaleError(FbdsError, ValueError):
    """The series has zero spread, so a radius in s.d. units is undefined."""


class InsufficientLengthError(ValidationError):
    """Series too short for the requested embedding dimension."""


class DegenerateVarianceError(FbdsError, ArithmeticError):
    """Asymptotic variance is non-positive (``K`` is too close to ``C**2``)."""

    def __init__(self, message: str, c: float | None = None, k: float | None = None):
        super().__init__(message)
        self.c = c
        self.k = k


class EstimationError(FbdsError, ArithmeticError):
    """Model estimation failed."""
