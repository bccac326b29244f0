"""Base exception types shared across the package.

Every domain error raised by this package subclasses :class:`Error`, so
callers (in particular the CLI) can distinguish expected failures from
bugs with a single except clause.
"""


class Error(Exception):
    """Base class for all thermoledger domain errors."""


class InvalidKey(Error):
    """A public or private key is malformed for the configured scheme."""
