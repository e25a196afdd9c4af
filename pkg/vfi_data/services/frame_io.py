"""
Frame directories: `%06d.png` 8-bit RGB files numbered from 000001, plus an
optional `meta.txt` holding `fps=<float>`.
"""
import logging
import re
from pathlib import Path
from typing import List, Mapping, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from vfi_net.utils import parse_key_values

from ..exceptions import EmptyDirectoryError, FrameDimensionError, UnreadableFrameError
from .models import FrameSequence

logger = logging.getLogger(__name__)

FRAME_PATTERN = re.compile(r"^\d{6}\.png$")
META_FILE = "meta.txt"
DEFAULT_FPS = 30.0


def frame_name(index: int) -> str:
    """File name of the frame at 0-based position index"""
    return f"{index + 1:06d}.png"


def list_frames(dir_path: Union[str, Path]) -> List[Path]:
    """Numbered frame files in temporal (= lexicographic) order"""
    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise EmptyDirectoryError(f"frame directory {dir_path} does not exist", dir_path)
    return sorted(p for p in dir_path.iterdir() if FRAME_PATTERN.match(p.name))


def read_image(path: Path) -> np.ndarray:
    """One frame as float32 [H, W, 3] in [0, 1]"""
    try:
        with Image.open(path) as image:
            pixels = np.asarray(image.convert("RGB"), dtype=np.float32)
    except (UnidentifiedImageError, OSError) as e:
        raise UnreadableFrameError(f"cannot read frame {path}: {e}", path)
    return pixels / 255.0


def write_image(path: Path, frame: np.ndarray) -> None:
    """Quantize a [H, W, 3] frame to 8 bits (values clamped to [0, 1])"""
    pixels = np.clip(np.rint(np.asarray(frame, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(pixels).save(path)


def read_fps(dir_path: Path) -> float:
    meta = dir_path / META_FILE
    if not meta.is_file():
        return DEFAULT_FPS
    values = parse_key_values(meta.read_text(encoding="utf-8").splitlines(), str(meta))
    try:
        return float(values.get("fps", DEFAULT_FPS))
    except ValueError:
        logger.warning(f"Ignoring malformed fps in {meta}: {values['fps']}")
        return DEFAULT_FPS


def load_frames(dir_path: Union[str, Path]) -> FrameSequence:
    """
    Load a frame directory.

    Args:
        dir_path: Directory of numbered PNG frames

    Returns:
        FrameSequence with frames scaled to [0, 1]
    """
    dir_path = Path(dir_path)
    paths = list_frames(dir_path)
    if not paths:
        raise EmptyDirectoryError(f"no numbered frames (%06d.png) in {dir_path}", dir_path)
    frames = []
    for path in paths:
        frame = read_image(path)
        if frames and frame.shape != frames[0].shape:
            raise FrameDimensionError(
                f"frame {path.name} is {frame.shape[1]}x{frame.shape[0]}, expected "
                f"{frames[0].shape[1]}x{frames[0].shape[0]} like {paths[0].name}",
                path,
            )
        frames.append(frame)
    logger.debug(f"Loaded {len(frames)} frames from {dir_path}")
    return FrameSequence(np.stack(frames), fps=read_fps(dir_path))


def write_frames(frames: Mapping[int, np.ndarray], dir_path: Union[str, Path], fps: float = DEFAULT_FPS) -> Path:
    """
    Write frames at explicit 0-based positions plus meta.txt.

    Positions may have holes; file names keep lexicographic order equal to
    temporal order.
    """
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    for index in sorted(frames):
        write_image(dir_path / frame_name(index), frames[index])
    (dir_path / META_FILE).write_text(f"fps={float(fps)!r}\n", encoding="utf-8")
    logger.debug(f"Saved {len(frames)} frames to {dir_path}")
    return dir_path


def save_frames(seq: FrameSequence, dir_path: Union[str, Path]) -> Path:
    """Write a sequence as numbered PNGs plus meta.txt"""
    return write_frames(dict(enumerate(seq.frames)), dir_path, seq.fps)
