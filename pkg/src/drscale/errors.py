"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`MetricError`, which itself is a :class:`ValueError` so callers that
only care about "bad input" can catch the builtin.
"""


class MetricError(ValueError):
    """Base class for all package errors."""


class InputValidationError(MetricError):
    """Input array is malformed (wrong shape, NaN/Inf, negative distances)."""


class ParameterError(MetricError):
    """A scalar parameter is outside its admissible range."""


class PairingError(MetricError):
    """Two distance vectors that must be paired have different lengths."""


class DegenerateInputError(MetricError):
    """All distances on one side are zero, so the metric is undefined."""


class UndefinedCorrelationError(MetricError):
    """A correlation was requested for a sequence with zero variance."""


class CalibrationError(MetricError):
    """Perplexity search failed for a point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class NumericDegeneracyError(MetricError):
    """A kernel normalizer collapsed to zero or became non-finite."""


class DivergenceUndefinedError(MetricError):
    """KL divergence is infinite: q vanishes where p is positive."""


class ParseError(MetricError):
    """A matrix file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
