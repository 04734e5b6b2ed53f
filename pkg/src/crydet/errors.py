"""Exception hierarchy shared across the package."""


class CryDetError(Exception):
    """Base class for all package errors."""


class DecodeError(CryDetError):
    """Audio file could not be parsed."""


class UnsupportedFormatError(CryDetError):
    """Audio file uses an encoding this package does not read."""


class ShapeError(CryDetError, ValueError):
    """Tensor or configuration shapes are inconsistent."""


class NumericError(CryDetError, ArithmeticError):
    """A non-finite value appeared where finite numbers are required."""


class DataError(CryDetError):
    """Dataset or manifest problem (missing samples, duplicate paths, ...)."""


class CheckpointError(CryDetError):
    """Checkpoint file is malformed or incompatible with the model."""
