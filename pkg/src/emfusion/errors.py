"""Exception hierarchy shared across the package.

CLI exit-code mapping: InvalidInputError and ConfigError exit with 2,
NumericError with 3.
"""


class EmfusionError(Exception):
    """Base class for all package errors."""


class InvalidInputError(EmfusionError):
    """Caller passed data that violates an operation's preconditions."""


class ConfigError(EmfusionError):
    """Configuration is inconsistent (shapes, schema tags, missing paths)."""


class NumericError(EmfusionError):
    """A computation produced non-finite values."""
