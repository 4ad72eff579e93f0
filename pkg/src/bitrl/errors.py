"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid static configuration (dimensions, modes, unknown fields)."""


class UsageError(RuntimeError):
    """An operation was called in a state that does not permit it."""


class NotReadyError(RuntimeError):
    """A component was asked for more than it currently holds."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""
