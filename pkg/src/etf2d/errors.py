"""Exception types raised across the package."""


class Etf2dError(Exception):
    """Base class for all package errors."""


class ConfigurationError(Etf2dError, ValueError):
    """A model, scenario, or tuning parameter is invalid.

    ``path`` names the offending field (dotted, e.g. ``etm.rho[1][0]``) when known.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class InvariantViolation(Etf2dError, RuntimeError):
    """An internal invariant (PSD bound, nonnegative variable, ...) failed."""


class SingularityError(Etf2dError, ArithmeticError):
    """The innovation bound matrix could not be factorized, so no gain exists."""


class DataError(Etf2dError, LookupError):
    """A required measurement or grid value is missing."""


class OutOfScopeError(Etf2dError, ValueError):
    """The request falls outside the analyzed index range."""
