from FLAVR.exceptions import FlavrConfigError, FlavrError


class FrameDirectoryError(FlavrError):
    """Base class for problems with a frame directory"""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(message)


class EmptyDirectoryError(FrameDirectoryError):
    """Raised when a frame directory holds no numbered frames"""


class UnreadableFrameError(FrameDirectoryError):
    """Raised when a frame file cannot be decoded"""


class FrameDimensionError(FrameDirectoryError):
    """Raised when a frame's size differs from the first frame of its clip"""


class SampleRangeError(FlavrError):
    """Raised when a sample needs frames outside its sequence"""


class SynthesisError(FlavrError):
    """Raised when a synthetic object would leave the frame"""


class EmptyDatasetError(FlavrConfigError):
    """Raised when a dataset view holds no usable window"""
