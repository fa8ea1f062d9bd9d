"""Exception types raised across the package."""


class DnlabError(Exception):
    """Base class for all package errors."""


class SeparationViolation(DnlabError):
    """Top and bottom boundaries come closer than the allowed minimum."""


class NoConvergence(DnlabError):
    """An iterative solver hit its iteration cap."""


class ConstantInput(DnlabError, ZeroDivisionError):
    """A ratio was requested for constant data, whose seminorm vanishes."""


class NonConvex(DnlabError):
    """A second derivative meant to be nonnegative was found negative."""


class NonZeroMean(DnlabError):
    """Data required to have zero mean does not."""


class StabilityViolation(DnlabError):
    """A time step increased the sup norm beyond tolerance."""


class NonPositiveValues(DnlabError):
    """A logarithmic fit met a nonpositive sample."""


class ConfigError(DnlabError):
    """Experiment configuration failed validation."""
