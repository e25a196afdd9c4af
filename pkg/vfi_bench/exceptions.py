from FLAVR.exceptions import FlavrConfigError, FlavrError


class BenchProtocolError(FlavrConfigError):
    """Raised when benchmark settings break the timing protocol"""


class RecursiveBaselineError(FlavrError):
    """Raised when the recursive k=2 baseline cannot reach the requested factor"""
