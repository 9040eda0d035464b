"""Exception taxonomy shared across the library.

The CLI maps these onto exit codes: usage errors -> 1, domain/validation
errors -> 2, accuracy/numerical failures -> 3.
"""

from __future__ import annotations


class RoughHedgeError(Exception):
    """Base class for all library errors."""


class DomainError(RoughHedgeError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ValidationError(RoughHedgeError, ValueError):
    """A structural invariant failed (carries the offending nodes)."""

    def __init__(self, message: str, nodes=None):
        super().__init__(message)
        self.nodes = list(nodes) if nodes is not None else []


class NumericalError(RoughHedgeError, ArithmeticError):
    """NaN propagation or an internal solver inconsistency."""


class AccuracyError(RoughHedgeError, RuntimeError):
    """A quadrature or scheme could not meet its accuracy target.

    ``bound`` carries the estimated residual (e.g. a Fourier tail bound).
    """

    def __init__(self, message: str, bound: float = float("nan")):
        super().__init__(message)
        self.bound = bound
