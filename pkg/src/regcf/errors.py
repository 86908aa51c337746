"""Exception hierarchy shared by every estimation stage."""


class RegcfError(Exception):
    """Base class for all errors raised by :mod:`regcf`."""


class DataError(RegcfError, ValueError):
    """Malformed or unusable input data."""


class DegenerateSampleError(DataError):
    """Too few observations for the requested operation."""


class DegenerateOutcomeError(DataError):
    """Binary outcome without variation."""


class NumericalError(RegcfError, ArithmeticError):
    """Base class for failures of a numerical routine."""


class NoSignalError(NumericalError):
    """The instrument covariance has numerical rank zero."""


class CollinearityError(NumericalError):
    """Second-stage design matrix is rank deficient."""


class SeparationError(NumericalError):
    """The binary outcome is (quasi-)perfectly separated by the regressors."""

    def __init__(self, message, *, max_abs_index=None, iterations=None):
        super().__init__(message)
        self.max_abs_index = max_abs_index
        self.iterations = iterations


class SingularInformationError(NumericalError):
    """Information matrix too ill-conditioned to invert."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class InfeasibleDesignError(RegcfError, ValueError):
    """Simulation configuration cannot be realised."""


class ExperimentFailure(RegcfError):
    """Too many Monte Carlo replications failed."""
