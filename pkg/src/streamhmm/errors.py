"""Exception types raised by the library."""


class StreamHmmError(Exception):
    """Base class for library errors."""


class ParameterError(StreamHmmError, ValueError):
    """A distribution or model parameter is outside its legal domain."""


class InputError(StreamHmmError, ValueError):
    """User-supplied data (features, labels, files) is malformed."""


class NumericError(StreamHmmError, ArithmeticError):
    """A numerical operation failed fatally (e.g. a non-PD matrix)."""


class SnapshotError(StreamHmmError, ValueError):
    """A model snapshot blob is missing, corrupt, or from an unknown format."""
