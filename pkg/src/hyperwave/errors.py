"""Exception types shared across the package."""


class HyperwaveError(Exception):
    """Base class for all package errors."""


class ConfigError(HyperwaveError, ValueError):
    """Invalid configuration or parameters (CLI exit code 2)."""


class DomainError(HyperwaveError, ValueError):
    """A point lies outside the domain of a coordinate map."""


class NonFiniteError(HyperwaveError, FloatingPointError):
    """A field contains NaN or Inf values."""


class BlowUpError(NonFiniteError):
    """Time integration produced non-finite values (CLI exit code 3)."""

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


class InvalidSpecError(ConfigError):
    """A holomorphic map whose image leaves the unit disk."""


class GaugeError(HyperwaveError, RuntimeError):
    """The caloric gauge cannot be defined for the given trajectory."""


class FitDomainError(HyperwaveError, ValueError):
    """Data unsuitable for a log-linear fit."""
