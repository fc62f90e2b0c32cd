"""Exception hierarchy shared by every module."""


class CfarFpError(Exception):
    """Base class; the CLI maps subclasses onto exit codes."""


class NumericError(CfarFpError):
    """A numerical procedure failed (exit code 3)."""


class NotPositiveDefinite(NumericError):
    pass


class NonConvergence(NumericError):
    pass


class DimensionMismatch(CfarFpError, ValueError):
    pass


class InvalidParameter(CfarFpError, ValueError):
    pass


class DomainError(CfarFpError, ValueError):
    pass


class ThresholdUnset(CfarFpError):
    pass


class InsufficientTrials(CfarFpError, ValueError):
    pass


class ConfigError(CfarFpError, ValueError):
    pass


class FileFormatError(CfarFpError):
    """Unreadable or malformed input file (exit code 4)."""
