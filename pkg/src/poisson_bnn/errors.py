"""Exception types shared across the package."""


class PoissonBnnError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PoissonBnnError, ValueError):
    """Non-finite covariates/weights or malformed shapes."""


class InvalidTargetError(PoissonBnnError, ValueError):
    """Targets that are negative or not integer valued."""


class DomainError(PoissonBnnError, ValueError):
    """Argument outside the mathematical domain of a function (e.g. rate <= 0)."""


class NetworkOverflowError(PoissonBnnError, ArithmeticError):
    """Output pre-activation exceeded the configured cap.

    Attributes
    ----------
    row : int
        Index of the first offending input row.
    value : float
        The offending pre-activation.
    """

    def __init__(self, row, value, cap):
        self.row = int(row)
        self.value = float(value)
        self.cap = float(cap)
        super().__init__(
            f"output pre-activation {value:.6g} exceeds cap {cap:g} at row {row}"
        )


class OptimizationError(PoissonBnnError, RuntimeError):
    """Minimization could not proceed; ``last_w`` holds the last finite iterate."""

    def __init__(self, message, last_w=None, partial=None):
        super().__init__(message)
        self.last_w = last_w
        self.partial = partial


class DegeneratePosteriorError(PoissonBnnError, ArithmeticError):
    """Penalty energy is zero so the hyperparameter update is undefined."""


class SingularDesignError(PoissonBnnError, ValueError):
    """GLM design matrix is rank deficient."""


class GlmConvergenceError(PoissonBnnError, RuntimeError):
    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log or []


class DegenerateStatisticError(PoissonBnnError, ValueError):
    """All chains are constant and equal; EPSR is 0/0."""


class NotApplicableError(PoissonBnnError, ValueError):
    pass


class EmptyDatasetError(PoissonBnnError, ValueError):
    pass


class ParseError(PoissonBnnError, ValueError):
    pass


class ChainError(PoissonBnnError, RuntimeError):
    pass


class ConfigError(PoissonBnnError, ValueError):
    pass
