"""
Evaluation protocol: metrics of the denormalized, clamped predictions of
every window, averaged over the k - 1 frames and then over windows.
"""
import logging

import logfire
import numpy as np
from tqdm import tqdm

from vfi_data.exceptions import EmptyDatasetError
from vfi_data.services.dataset import ClipDataset
from vfi_data.services.sampling import collate, denormalize

from ..exceptions import MetricShapeError
from .models import EvalReport, EvalRow
from .quality import psnr, ssim

logger = logging.getLogger(__name__)


def evaluate(net, dataset: ClipDataset, batch_size: int = 1) -> EvalReport:
    """
    Score a network on every window of a dataset.

    Args:
        net: Built network (anything with `config` and `forward`)
        dataset: Windows with the network's (k, C)
        batch_size: Windows per forward pass

    Returns:
        EvalReport with one row per predicted frame
    """
    if dataset.k != net.config.k or dataset.context != net.config.context:
        raise MetricShapeError(
            f"dataset view k={dataset.k} C={dataset.context} does not match the network's "
            f"k={net.config.k} C={net.config.context}"
        )
    if len(dataset) == 0:
        raise EmptyDatasetError("evaluation dataset has no full-context window")

    report = EvalReport(k=dataset.k, context=dataset.context)
    with logfire.span("evaluate {windows} windows", windows=len(dataset)):
        for batch in tqdm(dataset.batches(batch_size), desc="eval", unit="batch", disable=None):
            samples = [dataset.prepare(i) for i in batch]
            inputs, targets, means = collate(samples)
            preds = net.forward(inputs.astype(net.config.np_dtype))
            for b, i in enumerate(batch):
                clip = f"{dataset.clip_of(i)}@{dataset.index[i][1].anchor}"
                for offset, (pred, target) in enumerate(zip(preds, targets), start=1):
                    frame = np.clip(denormalize(pred[b], means[b], channel_axis=0), 0.0, 1.0)
                    report.rows.append(EvalRow(
                        clip=clip, offset=offset, psnr=psnr(frame, target[b]), ssim=ssim(frame, target[b])
                    ))
    logger.info(f"Evaluation: {report.summary()}")
    return report
