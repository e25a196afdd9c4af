"""
Models for training runs: configuration, per-epoch log and checkpoints.
"""
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from vfi_net.services.models import FlavrConfig
from vfi_net.utils import parse_key_values, to_lines

from ..exceptions import TrainingConfigError

LOG_COLUMNS = ["epoch", "train_loss", "val_psnr", "lr"]


class TrainConfig(BaseModel):
    """Optimization settings of one training run"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    lr0: float = Field(2e-4, gt=0, description="Initial Adam learning rate")
    batch_size: int = Field(4, ge=1, description="Windows per optimizer step")
    max_epochs: int = Field(200, ge=1, description="Epoch budget")
    max_steps: Optional[int] = Field(None, ge=1, description="Optional optimizer-step budget across epochs")
    plateau_patience: int = Field(5, ge=1, description="Epochs without improvement before the lr halves")
    plateau_threshold: float = Field(1e-3, ge=0, description="PSNR improvement (dB) that resets the patience counter")
    beta1: float = Field(0.9, ge=0, lt=1, description="Adam first-moment decay")
    beta2: float = Field(0.999, ge=0, lt=1, description="Adam second-moment decay")
    eps: float = Field(1e-8, gt=0, description="Adam denominator offset")
    seed: int = Field(0, description="Seed of the data order, crops and augmentation")
    augment: bool = Field(True, description="Random temporal reversal and horizontal flip")
    crop_size: Optional[int] = Field(None, ge=1, description="Random square crop of every window")
    workers: int = Field(1, ge=1, description="Threads assembling batches")
    shuffle: bool = Field(True, description="Shuffle window order every epoch")

    @field_validator("max_steps", "crop_size", mode="before")
    @classmethod
    def parse_optional(cls, v: Any) -> Any:
        if isinstance(v, str) and v.strip().lower() in ("", "none"):
            return None
        return v

    @classmethod
    def from_mapping(cls, values: Dict[str, Any]) -> "TrainConfig":
        try:
            return cls(**values)
        except ValidationError as e:
            raise TrainingConfigError(f"invalid training config: {e}")

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "TrainConfig":
        return cls.from_mapping(parse_key_values(lines, "training config"))

    def to_lines(self) -> List[str]:
        return to_lines({k: ("none" if v is None else v) for k, v in self.model_dump().items()})


class EpochRecord(BaseModel):
    epoch: int = Field(..., ge=1)
    train_loss: float = Field(..., description="Mean batch loss of the epoch")
    train_psnr: float = Field(..., description="PSNR of the epoch's training predictions, from their mean squared error")
    val_psnr: Optional[float] = Field(None, description="Validation PSNR after the epoch, if a validation set was given")
    lr: float = Field(..., description="Learning rate used during the epoch")


class TrainingLog(BaseModel):
    """One record per finished epoch"""
    records: List[EpochRecord] = Field(default_factory=list)
    steps: int = Field(0, description="Optimizer steps taken")

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    @property
    def best_val_psnr(self) -> Optional[float]:
        values = [r.val_psnr for r in self.records if r.val_psnr is not None]
        return max(values) if values else None

    def lr_trace(self) -> List[float]:
        return [r.lr for r in self.records]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.records], columns=LOG_COLUMNS)

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False)
        return path


@dataclass
class Checkpoint:
    """
    Everything needed to rebuild a network and resume its optimizer.

    `tensors` holds parameters under their network names followed by Adam
    moments under `optim.m.<name>` and `optim.v.<name>`.
    """
    config: FlavrConfig
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    epoch: int = 0
    optimizer_step: int = 0
    best_val_psnr: Optional[float] = None

    @property
    def parameters(self) -> Dict[str, np.ndarray]:
        return {name: t for name, t in self.tensors.items() if not name.startswith("optim.")}

    @property
    def moments(self) -> Dict[str, np.ndarray]:
        return {name: t for name, t in self.tensors.items() if name.startswith("optim.")}

    def header_lines(self) -> List[str]:
        """Config blob: network config plus run bookkeeping"""
        best = "none" if self.best_val_psnr is None or math.isnan(self.best_val_psnr) else self.best_val_psnr
        return self.config.to_lines() + to_lines({
            "epoch": self.epoch,
            "optimizer_step": self.optimizer_step,
            "best_val_psnr": best,
        })
