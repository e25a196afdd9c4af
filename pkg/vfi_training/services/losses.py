"""
Reconstruction losses over the k - 1 predicted frames.

For every mode the value is the sum over predicted frames of the mean
elementwise penalty over batch, channels and pixels, so the loss magnitude
does not depend on batch size or resolution.
"""
import logging
from typing import List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from vfi_net.services.models import LossMode

from ..exceptions import LossShapeError

logger = logging.getLogger(__name__)

HUBER_DELTA = 1.0

LossResult = Tuple[float, List[np.ndarray]]


class FeatureLoss(Protocol):
    """Extra term added to L1 in `l1+perceptual` mode"""

    def __call__(self, preds: Sequence[np.ndarray], targets: Sequence[np.ndarray]) -> LossResult:
        ...


class ZeroFeatureLoss:
    """Stands in for a pretrained perceptual network: contributes nothing"""

    def __call__(self, preds: Sequence[np.ndarray], targets: Sequence[np.ndarray]) -> LossResult:
        return 0.0, [np.zeros_like(p) for p in preds]


def _penalty(diff: np.ndarray, mode: LossMode) -> Tuple[np.ndarray, np.ndarray]:
    """Elementwise penalty and its derivative"""
    if mode == LossMode.L2:
        return diff * diff, 2.0 * diff
    if mode == LossMode.HUBER:
        small = np.abs(diff) <= HUBER_DELTA
        value = np.where(small, 0.5 * diff * diff, HUBER_DELTA * (np.abs(diff) - 0.5 * HUBER_DELTA))
        return value, np.where(small, diff, HUBER_DELTA * np.sign(diff))
    return np.abs(diff), np.sign(diff)


def loss(
    preds: Sequence[np.ndarray],
    targets: Sequence[np.ndarray],
    mode: Union[LossMode, str] = LossMode.L1,
    feature_loss: Optional[FeatureLoss] = None,
) -> LossResult:
    """
    Loss value and gradient w.r.t. every prediction.

    Args:
        preds: k - 1 predicted frames [B, 3, H, W]
        targets: Ground-truth frames of the same shapes
        mode: l1, l2, huber (delta = 1) or l1+perceptual
        feature_loss: Extra term for l1+perceptual (a zero stub by default)

    Returns:
        Tuple of (loss, list of gradients shaped like preds)
    """
    mode = LossMode(mode)
    if len(preds) != len(targets):
        raise LossShapeError(f"loss: {len(preds)} prediction(s) but {len(targets)} target(s)")
    if not preds:
        raise LossShapeError("loss: no frames to compare")

    total = 0.0
    grads = []
    for j, (pred, target) in enumerate(zip(preds, targets)):
        if pred.shape != target.shape:
            raise LossShapeError(f"loss: frame {j} prediction {pred.shape} and target {target.shape} differ")
        diff = pred.astype(np.float64) - target.astype(np.float64)
        value, slope = _penalty(diff, mode)
        total += float(value.mean())
        grads.append((slope / diff.size).astype(pred.dtype))

    if mode == LossMode.L1_PERCEPTUAL:
        if feature_loss is None:
            logger.debug("l1+perceptual without a feature loss: using the zero stub")
            feature_loss = ZeroFeatureLoss()
        extra, extra_grads = feature_loss(preds, targets)
        total += float(extra)
        grads = [g + e.astype(g.dtype) for g, e in zip(grads, extra_grads)]
    return total, grads
