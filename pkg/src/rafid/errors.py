"""Exception types shared across the package."""


class RafError(Exception):
    """Base class for package errors."""


class ConfigurationError(RafError, ValueError):
    """Invalid region, constraint set or configuration value."""


class PairingError(RafError, ValueError):
    """A complex pole has no exact conjugate partner."""


class DegenerateInputError(RafError, ValueError):
    """Input makes the problem degenerate (e.g. zero excitation)."""


class DomainError(RafError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class MeasureError(RafError, ValueError):
    """Atomic measure with negative weights."""


class InfeasibleProblemError(RafError):
    """The conic problem admits no feasible point.

    ``report`` holds the solver's infeasibility certificate summary.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class NumericalError(RafError, ArithmeticError):
    """Numerical failure (non-finite iterates, failed factorization)."""
