from FLAVR.exceptions import FlavrError


class MetricShapeError(FlavrError):
    """Raised when compared images do not share a shape"""


class WindowTooLargeError(FlavrError):
    """Raised when an image is smaller than the SSIM window"""
