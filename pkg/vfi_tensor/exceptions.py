from FLAVR.exceptions import FlavrError


class ShapeMismatchError(FlavrError):
    """Raised when an operand's extent disagrees with what an op expects"""

    def __init__(self, op, axis, expected, actual, detail=None):
        self.op = op
        self.axis = axis
        self.expected = expected
        self.actual = actual
        message = f"{op}: axis {axis} expected {expected}, got {actual}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class DegenerateOutputError(FlavrError):
    """Raised when a convolution would produce an extent smaller than 1"""

    def __init__(self, op, axis, extent):
        self.op = op
        self.axis = axis
        self.extent = extent
        super().__init__(f"{op}: output extent on axis {axis} would be {extent} (< 1)")


class TensorFileError(FlavrError):
    """Raised when a raw tensor file is malformed"""


class TensorDtypeError(FlavrError):
    """Raised when a tensor is not float32 or float64"""


class InvalidConvSpecError(FlavrError):
    """Raised when a convolution spec has a non-positive extent or stride"""
