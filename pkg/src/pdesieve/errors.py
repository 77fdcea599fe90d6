"""Exception hierarchy shared across the package.

Process exit codes: configuration problems map to 2, numerical failures
to 3 and an empty discovery to 4 (see :mod:`pdesieve.cli`).
"""


class PdesieveError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(PdesieveError):
    """Invalid parameters, grids or config documents."""

    exit_code = 2


class BudgetError(ConfigurationError):
    """A combinatorial enumeration would exceed its stated budget."""


class NumericalError(PdesieveError):
    """Numerical failure inside a solver or estimator."""

    exit_code = 3


class DivergenceError(NumericalError):
    """Time integration produced non-finite values."""

    def __init__(self, message, time_index=None):
        super().__init__(message)
        self.time_index = time_index


class ConvergenceError(NumericalError):
    """An iterative solver hit its cap before converging."""


class SingularityError(NumericalError):
    """Rank-deficient design where an exact solve was requested."""


class EstimationError(NumericalError):
    """Covariance or density estimation failed."""


class AssemblyError(NumericalError):
    """Library assembly produced unusable (e.g. all-zero) columns."""


class DegenerateSampleError(NumericalError):
    """A statistic was requested on a degenerate sample."""


class ContractViolationError(PdesieveError):
    """Caller mixed artifacts that must share a common construction."""

    exit_code = 2


class EmptyDiscoveryError(PdesieveError):
    """Screening exhausted its budget without reaching ``s_min`` terms."""

    exit_code = 4
