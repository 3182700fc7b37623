"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A specification or configuration violates one of its invariants."""


class RegimeError(ValueError):
    """A closed-form bound was requested outside its step-size validity range."""


class CapabilityError(ValueError):
    """The requested operation is not defined for this loss family."""


class DivergenceError(RuntimeError):
    """An iterate became non-finite; the message names the offending step."""


class AnalyticRegionError(RuntimeError):
    """An iterate left the region on which the analytic closed forms are exact."""
