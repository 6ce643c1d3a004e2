"""Exception types shared across the package."""


class AocError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(AocError):
    """A config value, layout, or checkpoint is invalid or inconsistent."""


class UsageError(AocError):
    """An API call violated a precondition (wrong order, stale handle, bad shape)."""


class TrainingError(AocError):
    """Training produced non-finite numbers and cannot continue."""
