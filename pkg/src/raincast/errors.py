"""Shared exception base classes.

Module-specific errors subclass :class:`RaincastError` so callers can catch
everything from this package with a single except clause.
"""


class RaincastError(Exception):
    """Base class for all errors raised by raincast."""


class ConfigError(RaincastError):
    """Bad, missing, or internally inconsistent run configuration."""
