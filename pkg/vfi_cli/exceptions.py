from FLAVR.exceptions import FlavrConfigError


class UnknownConfigKeyError(FlavrConfigError):
    """Raised when a run config names a key no config record defines"""

    def __init__(self, key, source):
        self.key = key
        super().__init__(f"{source}: unknown config key '{key}'")


class MissingConfigValueError(FlavrConfigError):
    """Raised when a command needs a config value that was not given or is unusable"""

    def __init__(self, key, detail="is required"):
        self.key = key
        super().__init__(f"config key '{key}' {detail}")


class FactorMismatchError(FlavrConfigError):
    """Raised when a requested k or C cannot be served by a checkpoint's head"""
