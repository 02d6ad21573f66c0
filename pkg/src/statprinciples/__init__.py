"""Uncertainty-aware statistical machinery: hierarchical Gaussian models, variance
accounting, spatial prediction with measurement error, change of support,
confounding diagnostics, probability chains and dimensional analysis."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    DegenerateConditioningError,
    DimensionMismatchError,
    InputError,
    InvariantViolation,
    NegativeModelVarianceError,
    NumericalError,
    StatPrinciplesError,
    UnitError,
)
from .gaussian import GaussianDist, condition, is_spd, sample  # noqa: F401
