"""Exception types shared across the package."""


class CritZoneError(Exception):
    """Base class for every error raised by critzone."""


class DomainError(CritZoneError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class ScenarioError(CritZoneError, ValueError):
    """A scenario violates one of its validity conditions."""


class ConvergenceError(CritZoneError, RuntimeError):
    """A root finder stopped without meeting its tolerance.

    ``last`` holds the final iterate and ``iterations`` the number of
    updates performed.
    """

    def __init__(self, message, last=float("nan"), iterations=0):
        super().__init__(message)
        self.last = last
        self.iterations = iterations


class SingularDerivativeError(ConvergenceError):
    """The residual derivative vanished at an iterate."""
