"""
Models for frame sequences and training samples.

Frames are float32 arrays [H, W, 3] with values in [0, 1]; a sequence stacks
them as [N, H, W, 3].
"""
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from vfi_tensor.exceptions import ShapeMismatchError

from ..exceptions import SampleRangeError


@dataclass(frozen=True)
class FrameSequence:
    """An ordered clip of RGB frames at a nominal frame rate"""
    frames: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float32)
        if frames.ndim != 4 or frames.shape[3] != 3:
            raise ShapeMismatchError("FrameSequence", "frames", "[N, H, W, 3]", frames.shape)
        if frames.shape[0] < 2:
            raise SampleRangeError(f"a frame sequence needs at least 2 frames, got {frames.shape[0]}")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass(frozen=True)
class SampleSpec:
    """
    One training window: 2C inputs with stride k around the gap (p, p + k).

    Indices are 0-based positions in the original sequence.
    """
    k: int
    context: int
    anchor: int

    @property
    def input_indices(self) -> Tuple[int, ...]:
        return tuple(self.anchor + (j - self.context + 1) * self.k for j in range(2 * self.context))

    @property
    def target_indices(self) -> Tuple[int, ...]:
        return tuple(range(self.anchor + 1, self.anchor + self.k))

    def is_valid(self, n_frames: int) -> bool:
        return self.anchor - (self.context - 1) * self.k >= 0 and self.anchor + self.context * self.k <= n_frames - 1


@dataclass
class Sample:
    """Materialized inputs [2C, H, W, 3] and targets [k-1, H, W, 3]"""
    inputs: np.ndarray
    targets: np.ndarray
    spec: Optional[SampleSpec] = None
    means: Optional[np.ndarray] = field(default=None)

    def with_frames(self, inputs: np.ndarray, targets: np.ndarray) -> "Sample":
        return replace(self, inputs=inputs, targets=targets)
