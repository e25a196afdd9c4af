"""
Training loop: mini-batch Adam with a plateau-halving learning rate.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import logfire
import numpy as np
from tqdm import tqdm

from FLAVR.exceptions import FlavrConfigError, FlavrError, FlavrProcessingError
from vfi_data.exceptions import EmptyDatasetError
from vfi_data.services.dataset import ClipDataset
from vfi_data.services.models import Sample
from vfi_data.services.sampling import collate, denormalize
from vfi_metrics.services.evaluation import evaluate
from vfi_metrics.services.quality import psnr_from_mse
from vfi_net.services.network import Network

from .checkpoint import checkpoint_from_network, save_checkpoint
from .losses import FeatureLoss, loss
from .models import EpochRecord, TrainConfig, TrainingLog
from .optimizer import Adam

logger = logging.getLogger(__name__)

BEST_CHECKPOINT = "best.flvr"
LAST_CHECKPOINT = "last.flvr"
TRAIN_LOG = "train_log.csv"


class PlateauSchedule:
    """
    Halve the learning rate after `patience` consecutive epochs whose score
    does not beat the best so far by more than `threshold`.
    """

    def __init__(self, lr0: float, patience: int, threshold: float = 1e-3):
        self.lr = lr0
        self.patience = patience
        self.threshold = threshold
        self.best: Optional[float] = None
        self.bad_epochs = 0

    def step(self, score: float) -> float:
        """Record an epoch's score and return the learning rate for the next epoch"""
        if self.best is None or score > self.best + self.threshold:
            self.best = score
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr /= 2.0
                self.bad_epochs = 0
                logger.info(f"Plateau after {self.patience} epoch(s): lr halved to {self.lr:g}")
        return self.lr


def assemble_batch(
    dataset: ClipDataset,
    indices: Sequence[int],
    seeds: Sequence[int],
    tcfg: TrainConfig,
    executor: Optional[ThreadPoolExecutor] = None,
) -> List[Sample]:
    """Prepare windows in order; each uses its own generator so any worker count gives the same batch"""

    def prepare(item):
        index, seed = item
        return dataset.prepare(
            index, rng=np.random.default_rng(seed), augment_frames=tcfg.augment, crop_size=tcfg.crop_size
        )

    items = list(zip(indices, seeds))
    if executor is None:
        return [prepare(item) for item in items]
    return list(executor.map(prepare, items))


def train_step(
    net: Network,
    samples: Sequence[Sample],
    optimizer: Adam,
    lr: float,
    feature_loss: Optional[FeatureLoss] = None,
) -> Tuple[float, float]:
    """
    One forward/backward pass and Adam update on a batch.

    Returns:
        (loss, mean squared error of the clamped predictions before the update)
    """
    inputs, targets, means = collate(samples)
    net.zero_grads()
    preds = net.forward(inputs.astype(net.config.np_dtype))
    preds = [denormalize(p, means, channel_axis=1) for p in preds]
    value, grads = loss(preds, targets, net.config.loss_mode, feature_loss)
    mse = float(np.mean([np.mean((np.clip(p, 0.0, 1.0) - t) ** 2) for p, t in zip(preds, targets)]))
    net.backward(grads)
    optimizer.step(lr)
    return value, mse


def fit(
    net: Network,
    train_set: ClipDataset,
    val_set: Optional[ClipDataset],
    tcfg: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
    feature_loss: Optional[FeatureLoss] = None,
) -> TrainingLog:
    """
    Train a network in place.

    Args:
        net: Network to optimize
        train_set: Training windows with the network's (k, C)
        val_set: Optional validation windows; their PSNR drives the lr schedule
            and selects the best checkpoint. Without them the PSNR of the
            epoch's training predictions does
        tcfg: Optimization settings
        out_dir: When given, receives best.flvr, last.flvr and train_log.csv
        feature_loss: Extra loss term for l1+perceptual mode

    Returns:
        TrainingLog with one record per epoch
    """
    if len(train_set) == 0:
        raise EmptyDatasetError("training set has no full-context window")
    if (train_set.k, train_set.context) != (net.config.k, net.config.context):
        raise FlavrConfigError(
            f"training windows k={train_set.k} C={train_set.context} do not match the network's "
            f"k={net.config.k} C={net.config.context}"
        )
    if val_set is not None and len(val_set) == 0:
        logger.warning("Validation set has no full-context window; scheduling on training PSNR")
        val_set = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(tcfg.seed)
    optimizer = Adam(net.parameters(), tcfg.beta1, tcfg.beta2, tcfg.eps)
    schedule = PlateauSchedule(tcfg.lr0, tcfg.plateau_patience, tcfg.plateau_threshold)
    log = TrainingLog()
    best_score: Optional[float] = None
    executor = ThreadPoolExecutor(max_workers=tcfg.workers, thread_name_prefix="flavr-batch") if tcfg.workers > 1 else None
    logger.info(
        f"Training on {len(train_set)} window(s), batch {tcfg.batch_size}, lr0 {tcfg.lr0:g}, "
        f"{tcfg.max_epochs} epoch(s), loss {net.config.loss_mode.value}"
    )

    try:
        for epoch in range(1, tcfg.max_epochs + 1):
            lr = schedule.lr
            with logfire.span("train epoch {epoch}", epoch=epoch, lr=lr):
                order = rng.permutation(len(train_set)) if tcfg.shuffle else np.arange(len(train_set))
                losses, errors = [], []
                for batch in tqdm(train_set.batches(tcfg.batch_size, order), desc=f"epoch {epoch}", unit="batch", disable=None):
                    seeds = rng.integers(0, 2**31 - 1, size=len(batch))
                    try:
                        samples = assemble_batch(train_set, batch, seeds, tcfg, executor)
                        value, mse = train_step(net, samples, optimizer, lr, feature_loss)
                        losses.append(value)
                        errors.append(mse)
                    except FlavrConfigError:
                        raise
                    except FlavrError as e:
                        logger.error(f"Training failed at epoch {epoch}, step {log.steps + 1}: {e}", exc_info=True)
                        raise FlavrProcessingError(f"training failed at epoch {epoch}, step {log.steps + 1}", e)
                    log.steps += 1
                    if tcfg.max_steps is not None and log.steps >= tcfg.max_steps:
                        break

                val_psnr = evaluate(net, val_set, tcfg.batch_size).psnr if val_set is not None else None
                train_loss = float(np.mean(losses))
                train_psnr = psnr_from_mse(float(np.mean(errors)))
                log.append(EpochRecord(epoch=epoch, train_loss=train_loss, train_psnr=train_psnr, val_psnr=val_psnr, lr=lr))
                score = val_psnr if val_psnr is not None else train_psnr
                improved = best_score is None or score > best_score
                best_score = score if improved else best_score
                schedule.step(score)
                logger.info(
                    f"Epoch {epoch}: train loss {train_loss:.6f}, train PSNR {train_psnr:.3f} dB"
                    + (f", val PSNR {val_psnr:.3f} dB" if val_psnr is not None else "")
                )

                if out_dir is not None:
                    best = log.best_val_psnr
                    if improved:
                        save_checkpoint(out_dir / BEST_CHECKPOINT, checkpoint_from_network(net, epoch, best, optimizer))
                    save_checkpoint(out_dir / LAST_CHECKPOINT, checkpoint_from_network(net, epoch, best, optimizer))
                    log.write_csv(out_dir / TRAIN_LOG)

            if tcfg.max_steps is not None and log.steps >= tcfg.max_steps:
                logger.info(f"Step budget of {tcfg.max_steps} reached after epoch {epoch}")
                break
    finally:
        if executor is not None:
            executor.shutdown(wait=True)
    return log
