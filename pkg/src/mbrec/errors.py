"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors 2,
numeric aborts 3.
"""


class MbrecError(Exception):
    """Base class for package errors."""


class DataError(MbrecError):
    """Malformed input data, incompatible split, or empty input."""


class CheckpointError(MbrecError):
    """Unreadable checkpoint or one incompatible with the current config."""


class NumericError(MbrecError):
    """Training produced a non-finite loss or gradient."""
