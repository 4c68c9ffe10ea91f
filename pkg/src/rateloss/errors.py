"""Exception hierarchy shared by all rateloss modules."""


class RateLossError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(RateLossError, ValueError):
    """An argument violates the operation's contract (domain, shape, finiteness)."""


class UnsupportedModelError(RateLossError):
    """The analytic density is not implemented for this (order, side-info) combination."""


class InfeasibleDistortionError(InvalidInputError):
    """Requested distortion is outside (0, sigma^2)."""


class InsufficientDataError(InvalidInputError):
    """Fewer training samples than regression coefficients."""


class IllConditionedDesignError(RateLossError):
    """Empirical Gram matrix failed the conditioning gate."""


class InsufficientSamplesError(InvalidInputError):
    """Too few Monte Carlo samples for a stable moment estimate."""


class NumericalFailureError(RateLossError):
    """Quadrature or root bracketing did not converge to the required tolerance."""


class ConfigError(RateLossError):
    """Experiment configuration is missing, malformed, or inconsistent."""
