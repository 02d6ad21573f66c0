"""Exception hierarchy shared by the library and the CLI.

The CLI maps each family onto its own exit status, so raise the most
specific class that applies.
"""


class StatPrinciplesError(Exception):
    """Base class for every error raised by this package."""


class InputError(StatPrinciplesError, ValueError):
    """Malformed, inconsistent or out-of-range input."""


class DimensionMismatchError(InputError):
    pass


class UnitError(InputError):
    """An operation that is meaningless for the units involved."""


class NumericalError(StatPrinciplesError, ArithmeticError):
    """A factorization or solve failed on otherwise well-formed input."""


class DegenerateConditioningError(NumericalError):
    pass


class InvariantViolation(StatPrinciplesError):
    """A computed result breaks an identity it is required to satisfy."""


class NegativeModelVarianceError(InvariantViolation):
    """Total error variance is smaller than the calibrated measurement variance.

    Both values are kept on the exception so callers can report the
    calibration inconsistency.
    """

    def __init__(self, s_xi2, s_eps2):
        self.s_xi2 = float(s_xi2)
        self.s_eps2 = float(s_eps2)
        super().__init__(
            f"model-error variance would be negative: s_xi2={self.s_xi2!r} < "
            f"s_eps2={self.s_eps2!r}; measurement variance is inconsistent with the fit"
        )
