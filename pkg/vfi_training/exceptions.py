from FLAVR.exceptions import FlavrConfigError, FlavrError


class TrainingConfigError(FlavrConfigError):
    """Raised when a TrainConfig violates one of its invariants"""


class LossShapeError(FlavrError):
    """Raised when predictions and targets differ in count or shape"""


class OptimizerStateError(FlavrError):
    """Raised when optimizer moments do not match the parameters they update"""


class CheckpointError(FlavrError):
    """Base class for malformed or incompatible checkpoint files"""


class BadMagicError(CheckpointError):
    """Raised when a file does not start with the checkpoint magic"""


class VersionMismatchError(CheckpointError):
    """Raised when a checkpoint was written by an unsupported format version"""

    def __init__(self, version, supported):
        self.version = version
        self.supported = supported
        super().__init__(f"checkpoint format version {version} is not supported (expected {supported})")


class TruncatedCheckpointError(CheckpointError):
    """Raised when a checkpoint ends inside a record"""


class ParameterNameMismatchError(CheckpointError):
    """Raised when checkpoint parameter names differ from a network's"""

    def __init__(self, missing, unexpected):
        self.missing = sorted(missing)
        self.unexpected = sorted(unexpected)
        parts = []
        if self.missing:
            parts.append(f"missing: {', '.join(self.missing)}")
        if self.unexpected:
            parts.append(f"unexpected: {', '.join(self.unexpected)}")
        super().__init__(f"checkpoint parameters do not match the network ({'; '.join(parts)})")
