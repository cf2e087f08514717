"""Exception hierarchy shared across the package."""


class MVError(Exception):
    """Base class for every error raised by mvonline."""


class InvalidReturnError(MVError, ValueError):
    """A return vector is non-positive, non-finite or exceeds the norm cap."""


class InvalidPortfolioError(MVError, ValueError):
    """Weights are negative or do not sum to one."""


class EmptyAccumulatorError(MVError):
    pass


class InvariantViolationError(MVError, ValueError):
    pass


class InvalidMomentsError(MVError, ValueError):
    """Covariance is not symmetric positive semidefinite."""


class ConvergenceError(MVError):
    """The solver hit its iteration cap without a KKT certificate.

    The best iterate and its residual are attached so callers can decide
    whether the point is usable anyway.
    """

    def __init__(self, message, portfolio=None, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.portfolio = portfolio
        self.residual = residual
        self.iterations = iterations


class ResourceLimitError(MVError):
    pass


class ConfigurationError(MVError, ValueError):
    pass


class BankruptcyError(MVError):
    """A portfolio return was not strictly positive."""


class SeriesDivergenceError(MVError, ValueError):
    pass


class GenerationError(MVError):
    pass


class MisconfiguredBoundsError(ConfigurationError):
    """Truncation bounds reject too much of the sampling law."""


class DataError(MVError, ValueError):
    """Bad value in an input file; carries the 1-based line number."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column
