"""
Checkpoint binary format.

    magic "FLVR" | u32 version = 1
    | u32 length | UTF-8 config blob (`key = value` lines)
    | u32 tensor count
    | per tensor: u32 length | UTF-8 name | tensor record (see vfi_tensor.services.tensor_io)

All integers are little-endian. Tensors are written in table order, so a
loaded checkpoint saves back to identical bytes.
"""
import logging
import struct
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from vfi_net.services.models import FlavrConfig
from vfi_net.services.network import Network
from vfi_net.utils import parse_key_values
from vfi_tensor.exceptions import ShapeMismatchError
from vfi_tensor.services.tensor import GradPair
from vfi_tensor.services.tensor_io import TruncatedTensorError, decode_record, encode_record

from ..exceptions import (
    BadMagicError,
    CheckpointError,
    ParameterNameMismatchError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from .models import Checkpoint
from .optimizer import Adam

logger = logging.getLogger(__name__)

MAGIC = b"FLVR"
VERSION = 1
RUN_KEYS = ("epoch", "optimizer_step", "best_val_psnr")


#----------------------------------------------------------------------------------------------------------------------------------------------
# Encoding
#----------------------------------------------------------------------------------------------------------------------------------------------

def _string(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def checkpoint_to_bytes(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION), _string("\n".join(ckpt.header_lines()) + "\n")]
    parts.append(struct.pack("<I", len(ckpt.tensors)))
    for name, tensor in ckpt.tensors.items():
        parts.append(_string(name))
        parts.append(encode_record(tensor))
    return b"".join(parts)


def _take(buffer: bytes, offset: int, count: int) -> Tuple[bytes, int]:
    end = offset + count
    if end > len(buffer):
        raise TruncatedCheckpointError(f"checkpoint ends at byte {len(buffer)}, next record needs {end}")
    return buffer[offset:end], end


def _read_u32(buffer: bytes, offset: int) -> Tuple[int, int]:
    raw, offset = _take(buffer, offset, 4)
    return struct.unpack("<I", raw)[0], offset


def _read_string(buffer: bytes, offset: int) -> Tuple[str, int]:
    length, offset = _read_u32(buffer, offset)
    raw, offset = _take(buffer, offset, length)
    try:
        return raw.decode("utf-8"), offset
    except UnicodeDecodeError as e:
        raise CheckpointError(f"invalid UTF-8 in checkpoint string: {e}")


def _parse_header(blob: str) -> Tuple[FlavrConfig, Dict[str, str]]:
    values = parse_key_values(blob.splitlines(), "checkpoint config")
    run = {key: values.pop(key) for key in RUN_KEYS if key in values}
    return FlavrConfig.from_mapping(values), run


def checkpoint_from_bytes(buffer: bytes) -> Checkpoint:
    if buffer[:4] != MAGIC:
        raise BadMagicError(f"bad magic {buffer[:4]!r}, expected {MAGIC!r}")
    version, offset = _read_u32(buffer, 4)
    if version != VERSION:
        raise VersionMismatchError(version, VERSION)
    blob, offset = _read_string(buffer, offset)
    config, run = _parse_header(blob)
    count, offset = _read_u32(buffer, offset)

    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        name, offset = _read_string(buffer, offset)
        if name in tensors:
            raise CheckpointError(f"duplicate tensor '{name}' in checkpoint")
        try:
            tensors[name], offset = decode_record(buffer, offset)
        except TruncatedTensorError as e:
            raise TruncatedCheckpointError(f"tensor '{name}': {e.message}")
    if offset != len(buffer):
        raise CheckpointError(f"{len(buffer) - offset} trailing byte(s) after the last tensor")

    best = run.get("best_val_psnr", "none")
    return Checkpoint(
        config=config,
        tensors=tensors,
        epoch=int(run.get("epoch", 0)),
        optimizer_step=int(run.get("optimizer_step", 0)),
        best_val_psnr=None if best.lower() == "none" else float(best),
    )


#----------------------------------------------------------------------------------------------------------------------------------------------
# Files
#----------------------------------------------------------------------------------------------------------------------------------------------

def save_checkpoint(path: Union[str, Path], ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.write_bytes(checkpoint_to_bytes(ckpt))
    logger.info(f"Saved checkpoint {path} (epoch {ckpt.epoch}, {len(ckpt.tensors)} tensors)")
    return path


def load_checkpoint(path: Union[str, Path], config: Optional[FlavrConfig] = None) -> Checkpoint:
    """
    Read a checkpoint file.

    Args:
        path: Checkpoint file
        config: When given, parameter names must match a network built from it

    Returns:
        The decoded Checkpoint
    """
    try:
        buffer = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")
    ckpt = checkpoint_from_bytes(buffer)
    if config is not None:
        check_parameter_names(ckpt, config)
    return ckpt


#----------------------------------------------------------------------------------------------------------------------------------------------
# Networks
#----------------------------------------------------------------------------------------------------------------------------------------------

class ShapeRecorder:
    """Initializer that allocates zeros and records every requested shape"""

    def __init__(self, dtype="float32"):
        self.dtype = np.dtype(dtype)
        self.shapes: Dict[str, Tuple[int, ...]] = {}

    def __call__(self, name: str, shape: Tuple[int, ...], fan_in: int) -> GradPair:
        self.shapes[name] = tuple(shape)
        return GradPair(np.zeros(shape, dtype=self.dtype))


def parameter_shapes(config: FlavrConfig) -> Dict[str, Tuple[int, ...]]:
    """Parameter names and shapes of a network built from config, in network order"""
    recorder = ShapeRecorder(config.dtype)
    Network(config, recorder)
    return recorder.shapes


def check_parameter_names(ckpt: Checkpoint, config: FlavrConfig) -> None:
    expected = set(parameter_shapes(config))
    stored = set(ckpt.parameters)
    if expected != stored:
        raise ParameterNameMismatchError(expected - stored, stored - expected)


def checkpoint_from_network(
    network: Network,
    epoch: int = 0,
    best_val_psnr: Optional[float] = None,
    optimizer: Optional[Adam] = None,
) -> Checkpoint:
    tensors = {name: pair.value.copy() for name, pair in network.parameters()}
    if optimizer is not None:
        tensors.update({name: t.copy() for name, t in optimizer.state_tensors().items()})
    return Checkpoint(
        config=network.config,
        tensors=tensors,
        epoch=epoch,
        optimizer_step=optimizer.state.step if optimizer is not None else 0,
        best_val_psnr=best_val_psnr,
    )


def apply_checkpoint(network: Network, ckpt: Checkpoint) -> Network:
    """Copy checkpoint parameters into an existing network of the same structure"""
    check_parameter_names(ckpt, network.config)
    for name, pair in network.parameters():
        value = ckpt.parameters[name]
        if value.shape != pair.shape:
            raise ShapeMismatchError("apply_checkpoint", name, pair.shape, value.shape)
        pair.value[...] = value
    return network


def network_from_checkpoint(ckpt: Checkpoint) -> Network:
    """Rebuild the network a checkpoint was taken from"""
    network = Network(ckpt.config, ShapeRecorder(ckpt.config.dtype))
    apply_checkpoint(network, ckpt)
    logger.info(f"Restored network k={ckpt.config.k} context={ckpt.config.context} from epoch {ckpt.epoch}")
    return network
