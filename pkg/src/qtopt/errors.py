class QtoptError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(QtoptError, ValueError):
    pass


class InvalidTableError(QtoptError, ValueError):
    pass


class MustConvertError(InvalidInputError):
    """RGB planes handed to a stage that needs YCbCr or Gray."""


class ShapeError(QtoptError, ValueError):
    pass


class InvalidStateError(QtoptError, RuntimeError):
    pass


class InvalidPlanError(QtoptError, ValueError):
    pass


class InvalidParamsError(QtoptError, ValueError):
    pass


class InvalidCandidateError(QtoptError, ValueError):
    pass


class NumericalGuardError(QtoptError, FloatingPointError):
    pass


class UnsupportedJpegError(QtoptError):
    """A JPEG feature outside baseline sequential Huffman coding."""


class CorruptJpegError(QtoptError):
    pass


class ConfigError(QtoptError, ValueError):
    pass
