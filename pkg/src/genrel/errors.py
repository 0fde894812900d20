"""Exception types raised by the estimators and the simulation model."""


class DegenerateInputError(ValueError):
    """An input has zero variance, a singular covariance, or no usable spread."""


class ComputationError(ArithmeticError):
    """A numerical routine produced no usable result (e.g. posterior underflow)."""


class EstimationError(RuntimeError):
    """An estimator failed inside a larger computation.

    Carries the coefficient name and, when raised from a sweep, the
    ``(m, rep_index)`` coordinates of the failing replication.
    """

    def __init__(self, message, *, coefficient=None, m=None, rep_index=None):
        super().__init__(message)
        self.coefficient = coefficient
        self.m = m
        self.rep_index = rep_index


class ConfigError(ValueError):
    """A configuration value is missing, malformed or out of range."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class SweepError(RuntimeError):
    """A sweep cell finished with zero successful replications."""

    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table
