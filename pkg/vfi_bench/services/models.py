"""
Models for benchmark settings and reports.
"""
import json
import statistics
from pathlib import Path
from typing import Any, List, Optional, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, computed_field, field_validator

from vfi_net.utils import split_list

from ..exceptions import BenchProtocolError

MIN_PROTOCOL_RUNS = 20


class BenchConfig(BaseModel):
    """Settings of the scaling benchmark"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    bench_ks: Tuple[int, ...] = Field((2, 4, 8), description="Interpolation factors to time")
    bench_height: int = Field(256, ge=1, description="Input height")
    bench_width: int = Field(256, ge=1, description="Input width")
    bench_warmup: int = Field(3, ge=0, description="Untimed forward passes before measuring")
    bench_runs: int = Field(MIN_PROTOCOL_RUNS, ge=1, description="Timed forward passes")
    bench_recursive: bool = Field(True, description="Also time the recursive k=2 baseline")
    bench_preset: bool = Field(True, description="Use the reduced bench widths instead of the run's network widths")

    @field_validator("bench_ks", mode="before")
    @classmethod
    def parse_ks(cls, v: Any) -> Any:
        return split_list(v)

    @field_validator("bench_ks")
    @classmethod
    def check_ks(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if not v or min(v) < 2:
            raise ValueError(f"bench factors must be >= 2, got {v}")
        return tuple(sorted(set(v)))

    @classmethod
    def from_mapping(cls, values) -> "BenchConfig":
        try:
            return cls(**values)
        except ValidationError as e:
            raise BenchProtocolError(f"invalid bench config: {e}")


class BenchReport(BaseModel):
    """Wall times of repeated forward passes on pre-materialized inputs"""
    k: int
    context: int
    height: int
    width: int
    batch: int = 1
    widths: Tuple[int, ...]
    dtype: str
    mode: str = Field("single-shot", description="single-shot or recursive")
    warmup: int
    workers: int = Field(..., description="Kernel worker threads during the run")
    forward_calls: int = Field(..., description="Forward passes per measured run")
    times: List[float] = Field(default_factory=list, description="Seconds per measured run")

    @computed_field
    @property
    def runs(self) -> int:
        return len(self.times)

    @computed_field
    @property
    def mean(self) -> float:
        return statistics.fmean(self.times)

    @computed_field
    @property
    def median(self) -> float:
        return statistics.median(self.times)

    @computed_field
    @property
    def stddev(self) -> float:
        return statistics.stdev(self.times) if len(self.times) > 1 else 0.0

    @computed_field
    @property
    def clips_per_second(self) -> float:
        return self.batch / self.mean if self.mean > 0 else float("inf")

    @computed_field
    @property
    def frames_per_second(self) -> float:
        return (self.k - 1) * self.clips_per_second

    @computed_field
    @property
    def protocol_compliant(self) -> bool:
        return self.runs >= MIN_PROTOCOL_RUNS

    def summary(self) -> str:
        return (
            f"{self.mode} k={self.k} C={self.context} {self.height}x{self.width}: "
            f"mean {self.mean * 1e3:.2f} ms, median {self.median * 1e3:.2f} ms, "
            f"stddev {self.stddev * 1e3:.2f} ms over {self.runs} run(s), "
            f"{self.frames_per_second:.2f} frames/s, {self.workers} worker(s)"
        )

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    def write_csv(self, path: Union[str, Path]) -> Path:
        """One row per measured run"""
        path = Path(path)
        pd.DataFrame({"run": range(1, self.runs + 1), "seconds": self.times}).to_csv(path, index=False)
        return path


class ScalingRow(BaseModel):
    k: int
    mean_time: float
    ratio: float = Field(..., description="mean_time / mean_time at k=2")
    recursive_time: Optional[float] = Field(None, description="Recursive k=2 baseline, None when unavailable")
    recursive_ratio: Optional[float] = None


class ScalingStudy(BaseModel):
    """Single-shot forward time per k against the recursive baseline"""
    height: int
    width: int
    rows: List[ScalingRow] = Field(default_factory=list)
    reports: List[BenchReport] = Field(default_factory=list)

    def ratio(self, k: int) -> float:
        return next(row.ratio for row in self.rows if row.k == k)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.model_dump() for row in self.rows], columns=list(ScalingRow.model_fields))

    def write_csv(self, path: Union[str, Path]) -> Path:
        """One row per k"""
        path = Path(path)
        self.to_frame().to_csv(path, index=False)
        return path

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2)
