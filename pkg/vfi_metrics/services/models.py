"""
Models for evaluation reports.
"""
from pathlib import Path
from typing import List, Union

import pandas as pd
from pydantic import BaseModel, Field


class EvalRow(BaseModel):
    """Metrics of one predicted frame"""
    clip: str = Field(..., description="Clip directory and anchor of the window, e.g. 'clip_0000@3'")
    offset: int = Field(..., ge=1, description="Position j of the frame inside the gap (1 .. k-1)")
    psnr: float = Field(..., description="PSNR in dB")
    ssim: float = Field(..., ge=-1.0, le=1.0, description="SSIM")


class EvalReport(BaseModel):
    """Per-frame metrics averaged over the k - 1 frames of a window, then over windows"""
    k: int
    context: int
    rows: List[EvalRow] = Field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.model_dump() for row in self.rows], columns=["clip", "offset", "psnr", "ssim"])

    def per_clip(self) -> pd.DataFrame:
        """Mean over the predicted frames of each window"""
        return self.to_frame().groupby("clip", sort=False)[["psnr", "ssim"]].mean()

    def per_offset(self) -> pd.DataFrame:
        """Mean over windows for each position inside the gap"""
        return self.to_frame().groupby("offset")[["psnr", "ssim"]].mean()

    @property
    def psnr(self) -> float:
        return float(self.per_clip()["psnr"].mean())

    @property
    def ssim(self) -> float:
        return float(self.per_clip()["ssim"].mean())

    def summary(self) -> str:
        return f"k={self.k} C={self.context} windows={len(self.per_clip())} PSNR={self.psnr:.3f} dB SSIM={self.ssim:.4f}"

    def write_csv(self, path: Union[str, Path]) -> Path:
        """`clip,offset,psnr,ssim` rows followed by a `mean,all` summary row"""
        frame = self.to_frame().astype({"offset": object})
        summary = pd.DataFrame([{"clip": "mean", "offset": "all", "psnr": self.psnr, "ssim": self.ssim}])
        path = Path(path)
        pd.concat([frame, summary], ignore_index=True).to_csv(path, index=False)
        return path
