"""Exception hierarchy shared by every stage of the pipeline."""


class FireGSError(Exception):
    """Base class for all errors raised by firegs."""

    exit_code = 4


class ValidationError(FireGSError, ValueError):
    exit_code = 2


class MissingInputError(FireGSError, FileNotFoundError):
    exit_code = 3


class NumericError(FireGSError, ArithmeticError):
    exit_code = 4


class NonProjectableError(NumericError):
    """Point lies at or behind the camera plane."""


class InvalidDepthError(NumericError):
    pass


class ShapeMismatchError(ValidationError):
    pass


class InsufficientOverlapError(NumericError):
    pass


class DegenerateFitError(NumericError):
    pass


class EmptyInputError(ValidationError):
    pass


class NotObservedError(NumericError):
    """A 3D point has no usable flow sample in a given view."""


class NoObservationError(NumericError):
    pass


class UndefinedLossError(NumericError):
    pass


class ImageTooSmallError(ValidationError):
    pass


class AmbiguousReadingError(NumericError):
    def __init__(self, message, bits=()):
        super().__init__(message)
        self.bits = tuple(bits)


class NoEdgeError(NumericError):
    pass


class FormatError(ValidationError):
    """File content does not match the expected magic or header."""
