"""
Input-context ablation: one model per context size, trained and evaluated on
the same clips.
"""
import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import logfire
import pandas as pd

from vfi_data.services.dataset import ClipDataset
from vfi_data.services.models import FrameSequence
from vfi_metrics.services.evaluation import evaluate
from vfi_net.services.models import FlavrConfig
from vfi_net.services.network import build

from .models import TrainConfig
from .trainer import fit

logger = logging.getLogger(__name__)

ABLATION_COLUMNS = ["context", "input_frames", "train_windows", "train_loss", "val_psnr", "val_ssim"]


def context_ablation(
    train_clips: Sequence[FrameSequence],
    val_clips: Sequence[FrameSequence],
    contexts: Sequence[int],
    base_config: FlavrConfig,
    tcfg: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
) -> pd.DataFrame:
    """
    Train and evaluate one network per context size.

    Every model starts from the same seed and sees the windows its context
    allows, so longer contexts may train on fewer windows per clip.

    Args:
        train_clips: Clips to train on
        val_clips: Clips to evaluate on
        contexts: Context sizes C to compare
        base_config: Network config; only `context` is replaced
        tcfg: Optimization settings shared by every run
        out_dir: When given, each run writes to `<out_dir>/context_<C>`

    Returns:
        DataFrame with one row per context
    """
    rows = []
    for context in contexts:
        config = FlavrConfig.from_mapping({**base_config.model_dump(), "context": context})
        with logfire.span("context ablation C={context}", context=context):
            train_set = ClipDataset(train_clips, config.k, context)
            val_set = ClipDataset(val_clips, config.k, context)
            net = build(config, tcfg.seed)
            run_dir = Path(out_dir) / f"context_{context}" if out_dir is not None else None
            log = fit(net, train_set, None, tcfg, run_dir)
            report = evaluate(net, val_set, tcfg.batch_size)
        rows.append({
            "context": context,
            "input_frames": config.input_frames,
            "train_windows": len(train_set),
            "train_loss": log.records[-1].train_loss,
            "val_psnr": report.psnr,
            "val_ssim": report.ssim,
        })
        logger.info(f"Context {context}: {report.summary()}")
    return pd.DataFrame(rows, columns=ABLATION_COLUMNS)
