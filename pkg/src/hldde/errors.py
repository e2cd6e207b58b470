"""Exception and warning types shared across the package."""


class HalfLinearError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(HalfLinearError, ValueError):
    """A parameter lies outside its admissible range (e.g. alpha <= 1)."""


class DomainError(HalfLinearError, ValueError):
    """A function was evaluated where it is undefined or nonpositive."""


class PreconditionError(HalfLinearError, ValueError):
    """An operation was called with inputs violating its preconditions."""


class InconclusiveError(HalfLinearError):
    """A numerical heuristic could not reach a decision."""


class UnsupportedDelayError(HalfLinearError, ValueError):
    """The delay map reaches the current time at an interior point."""


class MismatchError(HalfLinearError):
    """An observed solution class differs from the predicted one."""

    def __init__(self, predicted, observed):
        super().__init__(f"predicted class {predicted}, observed {observed}")
        self.predicted = predicted
        self.observed = observed


class ConfigError(HalfLinearError, ValueError):
    """A scenario file is malformed; the message names the offending field."""


class AccuracyWarning(UserWarning):
    """Quadrature tolerance was not reached at the maximum refinement depth."""


class ConsistencyWarning(UserWarning):
    """A computed trajectory contradicts a proven necessary condition."""
