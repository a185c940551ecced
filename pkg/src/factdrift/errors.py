"""Shared exception hierarchy.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
TransportError / ProtocolError -> 3.
"""

from __future__ import annotations


class FactDriftError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FactDriftError):
    """Invalid configuration or usage (bad flag values, missing config keys)."""


class DataError(FactDriftError):
    """Malformed or contract-violating input data."""


class AmbiguityError(DataError):
    """Two records claim the same evidence key; refusing to guess."""


class TransportError(FactDriftError):
    """A remote call failed at the transport level; safe to retry."""


class ProtocolError(FactDriftError):
    """A remote service answered, but not in the agreed format."""
