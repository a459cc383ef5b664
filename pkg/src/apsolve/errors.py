"""Exception hierarchy shared by the solver modules."""


class ApsolveError(Exception):
    """Base class for all library errors.

    ``step`` is set when the failure happened inside a time loop.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DomainError(ApsolveError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class CflError(ApsolveError):
    """A time step violates the stability condition of the explicit stage."""


class SolverError(ApsolveError):
    """A scalar root solve failed to produce a bracketed root."""


class ConfigError(ApsolveError, ValueError):
    """Invalid CLI configuration. ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
