"""
Sampling of (inputs, targets) windows from a frame sequence, augmentation
and per-sample mean normalization.
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np

from ..exceptions import SampleRangeError
from .models import FrameSequence, Sample, SampleSpec

logger = logging.getLogger(__name__)


def enumerate_anchors(n_frames: int, k: int, context: int) -> List[int]:
    """
    Every anchor p with full context, in order.

    A window needs p - (C - 1)k >= 0 and p + Ck <= n_frames - 1; windows that
    would need frames past either end are dropped, never padded.
    """
    first = (context - 1) * k
    last = n_frames - 1 - context * k
    return list(range(first, last + 1)) if last >= first else []


def enumerate_samples(seq: FrameSequence, k: int, context: int) -> List[SampleSpec]:
    return [SampleSpec(k, context, p) for p in enumerate_anchors(len(seq), k, context)]


def enumerate_gaps(n_frames: int, context: int) -> List[int]:
    """
    Left indices i of the gaps (i, i + 1) that can be filled when upsampling
    an existing video, i.e. windows of 2C consecutive frames around the gap.
    """
    return enumerate_anchors(n_frames, 1, context)


def materialize(seq: FrameSequence, spec: SampleSpec) -> Sample:
    """Gather the frames of one window"""
    if not spec.is_valid(len(seq)):
        raise SampleRangeError(
            f"window k={spec.k} C={spec.context} at anchor {spec.anchor} needs frames "
            f"{spec.input_indices[0]}..{spec.input_indices[-1]}, sequence has 0..{len(seq) - 1}"
        )
    return Sample(
        inputs=seq.frames[list(spec.input_indices)],
        targets=seq.frames[list(spec.target_indices)],
        spec=spec,
    )


def augment(sample: Sample, reverse: bool = False, hflip: bool = False) -> Sample:
    """
    Temporal reversal (inputs and targets) and horizontal mirroring.

    Both are involutions and they commute.
    """
    inputs, targets = sample.inputs, sample.targets
    if reverse:
        inputs, targets = inputs[::-1], targets[::-1]
    if hflip:
        inputs, targets = inputs[:, :, ::-1], targets[:, :, ::-1]
    return sample.with_frames(np.ascontiguousarray(inputs), np.ascontiguousarray(targets))


def random_crop(sample: Sample, size: int, rng: np.random.Generator) -> Sample:
    """Cut the same size x size window from every frame of the sample"""
    height, width = sample.inputs.shape[1:3]
    if size > height or size > width:
        raise SampleRangeError(f"crop {size}x{size} does not fit frames of {height}x{width}")
    top = int(rng.integers(0, height - size + 1))
    left = int(rng.integers(0, width - size + 1))
    window = (slice(None), slice(top, top + size), slice(left, left + size))
    return sample.with_frames(
        np.ascontiguousarray(sample.inputs[window]), np.ascontiguousarray(sample.targets[window])
    )


def normalize(sample: Sample) -> Tuple[Sample, np.ndarray]:
    """
    Subtract the per-channel mean of the 2C input frames from the inputs.

    Targets are left in [0, 1]; predictions are brought back with denormalize.

    Returns:
        Tuple of (normalized sample, means [3])
    """
    means = sample.inputs.astype(np.float64).mean(axis=(0, 1, 2))
    inputs = (sample.inputs - means).astype(sample.inputs.dtype)
    normalized = sample.with_frames(inputs, sample.targets)
    normalized.means = means
    return normalized, means


def denormalize(frames: np.ndarray, means: np.ndarray, channel_axis: int = -1) -> np.ndarray:
    """
    Add channel means back.

    Args:
        frames: Frames with a channel axis of extent 3
        means: [3] for one sample, or [B, 3] with the batch on axis 0
        channel_axis: Position of the channel axis in frames

    Returns:
        frames + means, broadcast along the channel axis
    """
    means = np.asarray(means)
    shape = [1] * frames.ndim
    shape[channel_axis] = 3
    if means.ndim == 2:
        shape[0] = means.shape[0]
    return (frames + means.reshape(shape)).astype(frames.dtype, copy=False)


def collate(samples: Sequence[Sample]) -> Tuple[np.ndarray, List[np.ndarray], np.ndarray]:
    """
    Stack samples into network tensors.

    Returns:
        Tuple of (inputs [B, 3, 2C, H, W], k - 1 targets [B, 3, H, W], means [B, 3])
    """
    if not samples:
        raise SampleRangeError("cannot collate an empty batch")
    inputs = np.stack([s.inputs for s in samples]).transpose(0, 4, 1, 2, 3)
    targets = np.stack([s.targets for s in samples]).transpose(1, 0, 4, 2, 3)
    means = np.stack([s.means if s.means is not None else np.zeros(3) for s in samples])
    return np.ascontiguousarray(inputs), [np.ascontiguousarray(t) for t in targets], means
