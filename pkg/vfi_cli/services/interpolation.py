"""
Frame-rate upsampling of a whole sequence with a trained network.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from tqdm import tqdm

from vfi_data.services.models import FrameSequence, SampleSpec
from vfi_data.services.sampling import collate, denormalize, enumerate_gaps, materialize, normalize
from vfi_net.services.network import Network

from ..exceptions import FactorMismatchError

logger = logging.getLogger(__name__)


@dataclass
class Interpolation:
    """
    Output frames keyed by position: original frame i sits at i * k and the
    predictions for gap (i, i + 1) at i * k + 1 .. i * k + k - 1.
    """
    k: int
    fps: float
    frames: Dict[int, np.ndarray] = field(default_factory=dict)
    filled: List[int] = field(default_factory=list)
    skipped: List[int] = field(default_factory=list)

    @property
    def new_frames(self) -> int:
        return len(self.filled) * (self.k - 1)


def output_factor(net: Network, k: Optional[int]) -> int:
    """
    The factor to emit: the network's own k, or a divisor of it that keeps a
    subset of the predicted positions.
    """
    trained = net.config.k
    if k is None or k == trained:
        return trained
    if k < 2 or trained % k:
        raise FactorMismatchError(
            f"checkpoint predicts k={trained} (head fixed at train time); k={k} is not a divisor of it"
        )
    return k


def interpolate_sequence(net: Network, seq: FrameSequence, k: Optional[int] = None, batch_size: int = 1) -> Interpolation:
    """
    Fill every gap between consecutive frames that has C frames of context on
    both sides; boundary gaps without full context are skipped.

    Args:
        net: Trained network
        seq: Frames to upsample
        k: Output factor (defaults to the network's k)
        batch_size: Gaps per forward pass

    Returns:
        Interpolation holding originals and predictions by output position
    """
    out_k = output_factor(net, k)
    stride = net.config.k // out_k
    context = net.config.context
    result = Interpolation(k=out_k, fps=seq.fps * out_k)
    for i, frame in enumerate(seq.frames):
        result.frames[i * out_k] = frame

    gaps = enumerate_gaps(len(seq), context)
    result.filled = gaps
    filled = set(gaps)
    result.skipped = [i for i in range(len(seq) - 1) if i not in filled]
    for start in tqdm(range(0, len(gaps), batch_size), desc="interpolate", unit="batch", disable=None):
        batch = gaps[start:start + batch_size]
        samples = [normalize(materialize(seq, SampleSpec(1, context, i)))[0] for i in batch]
        inputs, _, means = collate(samples)
        preds = net.forward(inputs.astype(net.config.np_dtype))
        for j in range(1, out_k):
            frames = np.clip(denormalize(preds[j * stride - 1], means, channel_axis=1), 0.0, 1.0)
            for b, i in enumerate(batch):
                result.frames[i * out_k + j] = frames[b].transpose(1, 2, 0)
    if result.skipped:
        logger.info(f"Skipped {len(result.skipped)} gap(s) without {context} frame(s) of context: {result.skipped}")
    return result
