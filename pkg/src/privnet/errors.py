"""Exception hierarchy shared by every subpackage."""


class PrivNetError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(PrivNetError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(PrivNetError, ValueError):
    """A precondition of an operation was violated by the caller."""


class ConfigError(PrivNetError, ValueError):
    """A configuration value is missing, out of range or inconsistent."""


class DataError(PrivNetError, ValueError):
    """Input data is malformed or cannot support the requested operation."""


class ParseError(DataError):
    """A raw input file could not be parsed.

    The message carries the file name and 1-based line number when known.
    """

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class NegativeSamplingError(DataError):
    """A user has no (or too few) non-interacted items to sample from."""

    def __init__(self, message, user=None):
        super().__init__(message)
        self.user = user


class FormatError(PrivNetError, ValueError):
    """A serialized container has the wrong magic header or is corrupt."""
