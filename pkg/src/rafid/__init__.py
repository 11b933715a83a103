"""Randomized atomic features for constrained system identification.

Stable impulse responses are modelled as sparse sums of sampled disk-pole
atoms ``c * p**t``; residues are fitted by one convex conic program that
carries the physical priors.
"""

__version__ = "0.1.0"

from .dictionary import TimeSeries, atomic_gauge, build_design, build_impulse
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    DomainError,
    InfeasibleProblemError,
    MeasureError,
    NumericalError,
    PairingError,
    RafError,
)
from .sampling import PoleRegion, PoleSet, sample_poles, validate_pairing
from .solver import ConstraintSet, RafModel, fit, frequency_response, simulate

__all__ = [
    "ConfigurationError", "ConstraintSet", "DegenerateInputError", "DomainError",
    "InfeasibleProblemError", "MeasureError", "NumericalError", "PairingError", "PoleRegion",
    "PoleSet", "RafError", "RafModel", "TimeSeries", "atomic_gauge", "build_design",
    "build_impulse", "fit", "frequency_response", "sample_poles", "simulate",
    "validate_pairing", "__version__",
]
