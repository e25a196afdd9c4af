"""
Datasets of clip directories viewed as (inputs, targets) windows.
"""
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import EmptyDirectoryError
from .frame_io import load_frames
from .models import FrameSequence, Sample, SampleSpec
from .sampling import augment, enumerate_samples, materialize, normalize, random_crop

logger = logging.getLogger(__name__)


def load_clip_root(root: Union[str, Path]) -> Tuple[List[str], List[FrameSequence]]:
    """Load every clip directory under root (a root holding frames directly is one clip)"""
    root = Path(root)
    if not root.is_dir():
        raise EmptyDirectoryError(f"dataset root {root} does not exist", root)
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not dirs:
        dirs = [root]
    clips = [load_frames(d) for d in dirs]
    logger.info(f"Loaded {len(clips)} clip(s) from {root}")
    return [d.name for d in dirs], clips


class ClipDataset:
    """
    Every full-context window of every clip, for one (k, C) view.

    Clips are held in memory; windows are materialized on access.
    """

    def __init__(self, clips: Sequence[FrameSequence], k: int, context: int, names: Optional[Sequence[str]] = None):
        self.clips = list(clips)
        self.k = k
        self.context = context
        self.names = list(names) if names is not None else [f"clip_{i:04d}" for i in range(len(self.clips))]
        self.index: List[Tuple[int, SampleSpec]] = [
            (clip, spec) for clip, seq in enumerate(self.clips) for spec in enumerate_samples(seq, k, context)
        ]
        skipped = [name for name, seq in zip(self.names, self.clips) if not enumerate_samples(seq, k, context)]
        if skipped:
            logger.warning(f"{len(skipped)} clip(s) too short for k={k}, C={context}: {', '.join(skipped)}")

    @classmethod
    def from_root(cls, root: Union[str, Path], k: int, context: int) -> "ClipDataset":
        names, clips = load_clip_root(root)
        return cls(clips, k, context, names=names)

    def __len__(self) -> int:
        return len(self.index)

    def __getitem__(self, i: int) -> Sample:
        clip, spec = self.index[i]
        return materialize(self.clips[clip], spec)

    def clip_of(self, i: int) -> str:
        return self.names[self.index[i][0]]

    def prepare(
        self,
        i: int,
        rng: Optional[np.random.Generator] = None,
        augment_frames: bool = False,
        crop_size: Optional[int] = None,
    ) -> Sample:
        """
        Materialize window i for the network: optional random crop and
        augmentation (each flip with probability 1/2), then normalization.
        """
        sample = self[i]
        if crop_size is not None:
            sample = random_crop(sample, crop_size, rng)
        if augment_frames:
            sample = augment(sample, reverse=bool(rng.integers(2)), hflip=bool(rng.integers(2)))
        sample, _ = normalize(sample)
        return sample

    def batches(self, batch_size: int, order: Optional[Iterable[int]] = None) -> List[List[int]]:
        """Split window indices into consecutive batches"""
        order = list(range(len(self))) if order is None else list(order)
        return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
