"""Exception hierarchy shared by every module."""


class PolarNoiseError(Exception):
    """Base class for all package errors."""


class DataError(PolarNoiseError, ValueError):
    """Input data is malformed, inconsistent or physically invalid."""


class NumericError(PolarNoiseError, ArithmeticError):
    """A computation left the representable or well-defined range."""


class DegenerateAolpError(DataError):
    """AoLP is undefined because s1 = s2 = 0."""


class NonPositiveIntensityError(DataError):
    """Total intensity s0 <= 0, so DoLP is undefined."""


class InvalidRadianceError(DataError):
    """A per-angle mean intensity is negative."""


class ShapeMismatchError(DataError):
    """Arrays or frames do not have compatible shapes."""


class InsufficientFramesError(DataError):
    """Fewer than two frames were accumulated, so variance is undefined."""


class TensorFormatError(DataError):
    """A tensor file could not be decoded."""


class MalformedHeaderError(TensorFormatError):
    pass


class TruncatedPayloadError(TensorFormatError):
    pass


class UnknownDtypeError(TensorFormatError):
    pass
