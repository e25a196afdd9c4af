"""
Synthetic clips of textured squares on a flat background.

Positions are analytic, so the true in-between frames of a clip are known
exactly. Square textures are mirror-symmetric, which makes the horizontal flip
of a left-moving clip identical to the matching right-moving clip.
"""
import logging
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from ..exceptions import SynthesisError
from .frame_io import save_frames
from .models import FrameSequence

logger = logging.getLogger(__name__)

BACKGROUND = 0.1
DEFAULT_SQUARE = 8
DEFAULT_PERIOD = 8.0


class MotionKind(str, Enum):
    TRANSLATE = "translate"
    SINE = "sine"
    OCCLUDE = "occlude"


def _start(speed: float, extent: int, size: int) -> float:
    """Origin at frame 0: leading edge for positive speed, trailing for negative, centered when still"""
    if speed > 0:
        return 0.0
    if speed < 0:
        return float(extent - size)
    return (extent - size) / 2.0


def _round(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5).astype(np.int64)


def object_origins(
    kind: Union[MotionKind, str],
    velocity: Sequence[float],
    n_frames: int,
    height: int,
    width: int,
    size: int = DEFAULT_SQUARE,
    amplitude: Optional[float] = None,
    period: Optional[float] = None,
) -> np.ndarray:
    """
    Top-left (y, x) of every square in every frame.

    Args:
        kind: translate (constant velocity), sine (horizontal oscillation
            around the center plus vertical drift), occlude (two squares
            crossing on one row; the second is drawn on top)
        velocity: (vx, vy) in pixels per frame
        n_frames: Clip length
        height: Frame height
        width: Frame width
        size: Square side
        amplitude: Sine amplitude in pixels (default a quarter of the free width)
        period: Sine period in frames

    Returns:
        Integer array [n_frames, n_objects, 2]
    """
    kind = MotionKind(kind)
    vx, vy = (float(v) for v in velocity)
    if size > height or size > width:
        raise SynthesisError(f"square of side {size} does not fit {height}x{width} frames")
    t = np.arange(n_frames, dtype=np.float64)
    y = _start(vy, height, size) + vy * t

    if kind == MotionKind.TRANSLATE:
        tracks = [(y, _start(vx, width, size) + vx * t)]
    elif kind == MotionKind.SINE:
        amplitude = (width - size) / 4.0 if amplitude is None else float(amplitude)
        period = DEFAULT_PERIOD if period is None else float(period)
        tracks = [(y, (width - size) / 2.0 + amplitude * np.sin(2.0 * np.pi * t / period))]
    else:
        speed = abs(vx)
        row = np.full_like(t, (height - size) / 2.0)
        tracks = [(row, speed * t), (row, (width - size) - speed * t)]

    origins = np.stack([np.stack([_round(ys), _round(xs)], axis=-1) for ys, xs in tracks], axis=1)
    limits = np.array([height - size, width - size])
    outside = np.nonzero(((origins < 0) | (origins > limits)).any(axis=(1, 2)))[0]
    if outside.size:
        frame = int(outside[0])
        raise SynthesisError(
            f"{kind.value} object leaves the {height}x{width} frame at frame {frame} "
            f"(origin {origins[frame].tolist()})"
        )
    return origins


def _texture(rng: np.random.Generator, size: int) -> np.ndarray:
    texture = rng.uniform(0.3, 1.0, size=(size, size, 3))
    return (texture + texture[:, ::-1]) / 2.0


def synth_motion(
    kind: Union[MotionKind, str],
    velocity: Sequence[float],
    n_frames: int,
    height: int,
    width: int,
    seed: int,
    size: int = DEFAULT_SQUARE,
    amplitude: Optional[float] = None,
    period: Optional[float] = None,
    fps: float = 30.0,
) -> FrameSequence:
    """Render a deterministic synthetic clip (see object_origins for the motion kinds)"""
    origins = object_origins(kind, velocity, n_frames, height, width, size, amplitude, period)
    rng = np.random.default_rng(seed)
    textures = [_texture(rng, size) for _ in range(origins.shape[1])]
    frames = np.full((n_frames, height, width, 3), BACKGROUND, dtype=np.float32)
    for t in range(n_frames):
        for (y, x), texture in zip(origins[t], textures):
            frames[t, y:y + size, x:x + size] = texture
    return FrameSequence(frames, fps=fps)


def _speed_limit(max_speed: int, extent: int, size: int, n_frames: int) -> int:
    return max(0, min(max_speed, (extent - size) // max(1, n_frames - 1)))


def write_synthetic_dataset(
    root: Union[str, Path],
    n_clips: int,
    kind: Union[MotionKind, str],
    n_frames: int,
    height: int,
    width: int,
    seed: int,
    max_speed: int = 2,
    size: int = DEFAULT_SQUARE,
) -> List[Path]:
    """
    Write n_clips clip directories (clip_0000, clip_0001, ...) under root.

    Each clip draws an integer velocity that keeps its squares in frame.
    """
    kind = MotionKind(kind)
    root = Path(root)
    rng = np.random.default_rng(seed)
    vx_limit = _speed_limit(max_speed, width, size, n_frames)
    vy_limit = _speed_limit(max_speed, height, size, n_frames)
    clips = []
    for index in range(n_clips):
        vx = int(rng.integers(-vx_limit, vx_limit + 1))
        vy = int(rng.integers(-vy_limit, vy_limit + 1)) if kind != MotionKind.OCCLUDE else 0
        if kind == MotionKind.SINE:
            vx = 0
        clip_seed = int(rng.integers(0, 2**31 - 1))
        seq = synth_motion(kind, (vx, vy), n_frames, height, width, clip_seed, size=size)
        clips.append(save_frames(seq, root / f"clip_{index:04d}"))
    logger.info(f"Wrote {n_clips} synthetic {kind.value} clip(s) of {n_frames} frames to {root}")
    return clips
