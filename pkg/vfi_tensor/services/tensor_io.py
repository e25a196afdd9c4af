"""
Raw tensor file format.

    magic "FTSR" | u32 version = 1 | u8 dtype code (0 = f32, 1 = f64)
    | u32 rank | u32 extents[rank] | little-endian row-major payload

The record after the version field is shared with the checkpoint format.
"""
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from ..exceptions import TensorFileError
from .tensor import CODE_DTYPES, DTYPE_CODES, Tensor, check_tensor

MAGIC = b"FTSR"
VERSION = 1


class TruncatedTensorError(TensorFileError):
    """Raised when a buffer ends inside a tensor record"""


def _take(buffer: bytes, offset: int, count: int) -> Tuple[bytes, int]:
    end = offset + count
    if end > len(buffer):
        raise TruncatedTensorError(f"buffer ends at byte {len(buffer)}, record needs {end}")
    return buffer[offset:end], end


def encode_record(x: Tensor) -> bytes:
    """dtype code, rank, extents and little-endian payload of one tensor"""
    x = check_tensor(x, "encode_record")
    code = DTYPE_CODES[x.dtype]
    header = struct.pack("<BI", code, x.ndim) + struct.pack(f"<{x.ndim}I", *x.shape)
    payload = x.astype(x.dtype.newbyteorder("<"), copy=False).tobytes(order="C")
    return header + payload


def decode_record(buffer: bytes, offset: int = 0) -> Tuple[np.ndarray, int]:
    """Inverse of encode_record; returns the tensor and the offset after it"""
    raw, offset = _take(buffer, offset, 5)
    code, rank = struct.unpack("<BI", raw)
    if code not in CODE_DTYPES:
        raise TensorFileError(f"unknown dtype code {code}")
    if rank < 1:
        raise TensorFileError(f"rank must be >= 1, got {rank}")
    raw, offset = _take(buffer, offset, 4 * rank)
    shape = struct.unpack(f"<{rank}I", raw)
    if min(shape) < 1:
        raise TensorFileError(f"extents must be >= 1, got {shape}")
    dtype = CODE_DTYPES[code]
    raw, offset = _take(buffer, offset, int(np.prod(shape)) * dtype.itemsize)
    values = np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(dtype).reshape(shape)
    return values, offset


def tensor_to_bytes(x: Tensor) -> bytes:
    return MAGIC + struct.pack("<I", VERSION) + encode_record(x)


def tensor_from_bytes(buffer: bytes) -> np.ndarray:
    if buffer[:4] != MAGIC:
        raise TensorFileError(f"bad magic {buffer[:4]!r}, expected {MAGIC!r}")
    raw, offset = _take(buffer, 4, 4)
    (version,) = struct.unpack("<I", raw)
    if version != VERSION:
        raise TensorFileError(f"unsupported tensor file version {version}")
    values, offset = decode_record(buffer, offset)
    if offset != len(buffer):
        raise TensorFileError(f"{len(buffer) - offset} trailing byte(s) after tensor")
    return values


def write_tensor(path: Union[str, Path], x: Tensor) -> None:
    Path(path).write_bytes(tensor_to_bytes(x))


def read_tensor(path: Union[str, Path]) -> np.ndarray:
    try:
        buffer = Path(path).read_bytes()
    except OSError as e:
        raise TensorFileError(f"cannot read tensor file {path}: {e}")
    return tensor_from_bytes(buffer)
