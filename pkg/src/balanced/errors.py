"""Exception hierarchy shared by every module."""


class BalancedError(Exception):
    """Base class for all library errors."""


class DomainError(BalancedError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class RangeError(DomainError):
    """An input exceeds the range where truncation effects stay negligible.

    Attributes
    ----------
    safe_max : float or None
        Largest admissible value, when one is known.
    """

    def __init__(self, message, safe_max=None):
        super().__init__(message)
        self.safe_max = safe_max


class AccuracyError(BalancedError, ArithmeticError):
    """A numerical procedure failed to reach its requested tolerance.

    Attributes
    ----------
    best : object
        Best available estimate at the time of failure.
    error_bound : float
        Estimated absolute error of ``best``.
    """

    def __init__(self, message, best=None, error_bound=float("nan")):
        super().__init__(message)
        self.best = best
        self.error_bound = error_bound


class NonConvergenceError(AccuracyError):
    """An iteration exhausted its budget or stopped contracting.

    ``best`` carries the last iterate or the trajectory so far.
    """


class NonContractionError(NonConvergenceError):
    """A band-narrowing map failed to shrink its ratio.

    ``best`` carries the trajectory up to the failing step.
    """
