"""Error taxonomy shared across the package.

The CLI maps these onto distinct exit codes, so everything user-facing
raises one of the classes below instead of bare ValueError.
"""

from __future__ import annotations


class GseError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(GseError):
    """Bad option, bad config file, or an out-of-menu parameter."""

    exit_code = 2


class DataError(GseError):
    """Unusable input data (files, signals, pairings)."""

    exit_code = 3


class IntegrityError(GseError):
    """Stored artifact fails its own consistency checks."""

    exit_code = 4


class FormatError(DataError):
    """Malformed container (bad magic, truncated header, bad sizes)."""


class UnsupportedFormatError(DataError):
    """Well-formed container holding an encoding we do not read."""


class RangeError(DataError):
    """Sample values outside the representable range."""


class PairingError(DataError):
    """Reference and degraded corpora do not pair up one-to-one."""


class AlignmentError(DataError):
    """Paired signals disagree on length or rate."""


class ShapeError(GseError, ValueError):
    """Tensor or weight shapes do not match an operation's contract."""
