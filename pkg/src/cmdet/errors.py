"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid configuration, file format, or parameter file."""


class NumericalError(Exception):
    """A computation produced non-finite values."""
