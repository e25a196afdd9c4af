"""
Models for the FLAVR network configuration.
"""
import math
from enum import Enum
from typing import Any, Dict, Iterable, List, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..exceptions import NetworkConfigError
from ..utils import parse_key_values, split_list, to_lines

BLOCK_NAMES = ("conv1", "conv2", "conv3", "conv4", "conv5")


class FusionMode(str, Enum):
    """How a decoder stage merges the matching encoder feature map"""
    NONE = "none"
    ADD = "add"
    CONCAT = "concat"


class LossMode(str, Enum):
    """Reconstruction objective used by the trainer"""
    L1 = "l1"
    L2 = "l2"
    HUBER = "huber"
    L1_PERCEPTUAL = "l1+perceptual"


class FlavrConfig(BaseModel):
    """Architecture and objective of one FLAVR network"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    k: int = Field(2, ge=2, description="Interpolation factor; the network predicts k - 1 frames")
    context: int = Field(2, ge=1, description="Frames on each side of the gap (input frames = 2 * context)")
    encoder_widths: Tuple[int, int, int, int, int] = Field(
        (64, 64, 128, 256, 512), description="Channel counts of conv1 (stem) .. conv5"
    )
    stem_kernel: Tuple[int, int, int] = Field((3, 7, 7), description="Stem kernel (t, h, w)")
    block_kernel: Tuple[int, int, int] = Field((3, 3, 3), description="Residual block kernel (t, h, w)")
    spatial_stride_blocks: Tuple[str, ...] = Field(
        ("conv1", "conv3", "conv4"), description="Blocks that halve H and W"
    )
    temporal_stride: Tuple[int, int, int, int, int] = Field(
        (1, 1, 1, 1, 1), description="Temporal stride of conv1 .. conv5"
    )
    fusion_mode: FusionMode = Field(FusionMode.CONCAT, description="Decoder skip fusion")
    gating_enabled: bool = Field(True, description="Channel gating after every (de)conv layer")
    fusion_conv_kernel: int = Field(3, ge=1, description="Kernel of the 2D temporal fusion conv")
    fusion_width: int = Field(64, ge=1, description="Output channels of the 2D temporal fusion conv")
    prediction_kernel: int = Field(7, ge=1, description="Kernel of the 2D prediction conv")
    loss_mode: LossMode = Field(LossMode.L1, description="Training objective")
    dtype: Literal["float32", "float64"] = Field("float32", description="Parameter and activation dtype")

    @field_validator("encoder_widths", "stem_kernel", "block_kernel", "spatial_stride_blocks",
                     "temporal_stride", mode="before")
    @classmethod
    def parse_sequence(cls, v: Any) -> Any:
        """Accept comma-separated strings from config files"""
        return split_list(v)

    @field_validator("encoder_widths")
    @classmethod
    def check_widths(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if min(v) < 1:
            raise ValueError(f"encoder widths must be >= 1, got {v}")
        return v

    @field_validator("stem_kernel", "block_kernel")
    @classmethod
    def check_kernel(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(k < 1 or k % 2 == 0 for k in v):
            raise ValueError(f"kernel extents must be odd and >= 1, got {v}")
        return v

    @field_validator("fusion_conv_kernel", "prediction_kernel")
    @classmethod
    def check_planar_kernel(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError(f"kernel must be odd, got {v}")
        return v

    @field_validator("spatial_stride_blocks")
    @classmethod
    def check_blocks(cls, v: Tuple[str, ...]) -> Tuple[str, ...]:
        unknown = [name for name in v if name not in BLOCK_NAMES]
        if unknown:
            raise ValueError(f"unknown block(s) {unknown}; expected a subset of {list(BLOCK_NAMES)}")
        return tuple(name for name in BLOCK_NAMES if name in v)

    @field_validator("temporal_stride")
    @classmethod
    def check_temporal_stride(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(s not in (1, 2) for s in v):
            raise ValueError(f"temporal strides must be 1 or 2, got {v}")
        return v

    @model_validator(mode="after")
    def check_geometry(self) -> "FlavrConfig":
        if self.input_frames % self.temporal_factor:
            raise ValueError(
                f"input frames 2 * context = {self.input_frames} must be divisible by the "
                f"temporal stride product {self.temporal_factor}"
            )
        return self

    # -------------------------------------------------------------------------
    # Derived geometry
    # -------------------------------------------------------------------------

    @property
    def input_frames(self) -> int:
        return 2 * self.context

    @property
    def output_frames(self) -> int:
        return self.k - 1

    @property
    def spatial_factor(self) -> int:
        """H and W must be divisible by this"""
        return 2 ** len(self.spatial_stride_blocks)

    @property
    def temporal_factor(self) -> int:
        return math.prod(self.temporal_stride)

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)

    def block_stride(self, level: int) -> Tuple[int, int, int]:
        """(t, h, w) stride of encoder level 0 (stem) .. 4 (conv5)"""
        spatial = 2 if BLOCK_NAMES[level] in self.spatial_stride_blocks else 1
        return (self.temporal_stride[level], spatial, spatial)

    # -------------------------------------------------------------------------
    # Presets and key = value serialization
    # -------------------------------------------------------------------------

    @classmethod
    def tiny(cls, **overrides) -> "FlavrConfig":
        """Small widths for gradient checks and fast tests"""
        values = {"encoder_widths": (4, 4, 8, 8, 8), "fusion_width": 8}
        values.update(overrides)
        return cls.from_mapping(values)

    @classmethod
    def bench(cls, **overrides) -> "FlavrConfig":
        """Reduced widths used by the scaling benchmark"""
        values = {"encoder_widths": (8, 8, 16, 32, 64), "fusion_width": 8}
        values.update(overrides)
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: Dict[str, Any]) -> "FlavrConfig":
        """Validate a mapping, raising NetworkConfigError on any violation"""
        try:
            return cls(**values)
        except ValidationError as e:
            raise NetworkConfigError(f"invalid network config: {e}")

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "FlavrConfig":
        return cls.from_mapping(parse_key_values(lines, "network config"))

    def to_lines(self) -> List[str]:
        return to_lines(self.model_dump())
