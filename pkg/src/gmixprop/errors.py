"""Exception types shared across the package."""

from __future__ import annotations


class GmixpropError(Exception):
    """Base class for package errors."""


class UnsupportedDimensionError(GmixpropError, ValueError):
    """No generating vector is configured for the requested size/dimension."""


class NumericalInversionError(GmixpropError, ArithmeticError):
    """A marginal CDF could not be inverted at the requested quantile."""


class SPDViolationError(GmixpropError, ValueError):
    """A matrix required to be symmetric positive definite is not."""


class NonFiniteMapError(GmixpropError, ArithmeticError):
    """A model map returned a non-finite value.

    Carries the offending evaluation point in ``point``.
    """

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class IntegrationBlowupError(GmixpropError, ArithmeticError):
    """Time integration produced a non-finite state.

    Carries the time stamp at which the blow-up was detected.
    """

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class GridMismatchError(GmixpropError, ValueError):
    """Two density grids do not share the same axes."""


class ConfigValidationError(GmixpropError, ValueError):
    """An experiment configuration violates the schema or semantics.

    ``violations`` lists every detected problem, not just the first.
    """

    def __init__(self, violations: list[str]):
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {v}" for v in violations))
        self.violations = violations
