from FLAVR.exceptions import FlavrConfigError, FlavrError


class NetworkConfigError(FlavrConfigError):
    """Raised when a FlavrConfig violates one of its invariants"""


class InputShapeError(FlavrError):
    """Raised when a network input does not fit the configured geometry"""

    def __init__(self, message, shape=None):
        self.shape = shape
        super().__init__(message)


class BackwardBeforeForwardError(FlavrError):
    """Raised when backward runs on a layer with no retained forward pass"""

    def __init__(self, layer):
        self.layer = layer
        super().__init__(f"backward called on '{layer}' before any forward pass")
