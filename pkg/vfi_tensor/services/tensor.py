"""
Tensor conventions shared by every kernel.

A tensor is a numpy array with rank >= 1, every extent >= 1, dtype float32 or
float64 and row-major (C) layout. Convolution operands are laid out
[B, C, T, H, W] (3D) or [B, C, H, W] (2D).
"""
import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from ..exceptions import (
    DegenerateOutputError,
    InvalidConvSpecError,
    ShapeMismatchError,
    TensorDtypeError,
)

Tensor = np.ndarray

# Codes used by the raw tensor and checkpoint formats
DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
CODE_DTYPES = {code: dtype for dtype, code in DTYPE_CODES.items()}


def check_tensor(x: Tensor, op: str = "tensor", rank: int = None) -> Tensor:
    """
    Validate the tensor invariants and return a C-contiguous view.

    Args:
        x: Candidate array
        op: Operation name used in error messages
        rank: Required rank, if any

    Returns:
        The same data as a C-contiguous numpy array
    """
    x = np.asarray(x)
    if x.dtype not in DTYPE_CODES:
        raise TensorDtypeError(f"{op}: dtype {x.dtype} is not float32 or float64")
    if x.ndim < 1:
        raise ShapeMismatchError(op, "rank", ">= 1", x.ndim)
    if rank is not None and x.ndim != rank:
        raise ShapeMismatchError(op, "rank", rank, x.ndim)
    for axis, extent in enumerate(x.shape):
        if extent < 1:
            raise ShapeMismatchError(op, axis, ">= 1", extent)
    return np.ascontiguousarray(x)


def row_major_offset(index: Sequence[int], shape: Sequence[int]) -> int:
    """Flat buffer offset of a multi-index, last axis fastest"""
    if len(index) != len(shape):
        raise ShapeMismatchError("row_major_offset", "rank", len(shape), len(index))
    offset = 0
    for axis, (i, extent) in enumerate(zip(index, shape)):
        if not 0 <= i < extent:
            raise ShapeMismatchError("row_major_offset", axis, f"0..{extent - 1}", i)
        offset = offset * extent + i
    return offset


def _triple(value, name: str) -> Tuple[int, int, int]:
    if isinstance(value, int):
        return (value, value, value)
    value = tuple(int(v) for v in value)
    if len(value) != 3:
        raise InvalidConvSpecError(f"{name} must have 3 entries (t, h, w), got {value}")
    return value


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a 3D (or planar, t = 1) convolution with zeros padding"""
    in_channels: int
    out_channels: int
    kernel: Tuple[int, int, int]
    stride: Tuple[int, int, int] = (1, 1, 1)
    padding: Tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        object.__setattr__(self, "kernel", _triple(self.kernel, "kernel"))
        object.__setattr__(self, "stride", _triple(self.stride, "stride"))
        object.__setattr__(self, "padding", _triple(self.padding, "padding"))
        if self.in_channels < 1 or self.out_channels < 1:
            raise InvalidConvSpecError(
                f"channel counts must be >= 1, got {self.in_channels} -> {self.out_channels}"
            )
        if min(self.kernel) < 1 or min(self.stride) < 1:
            raise InvalidConvSpecError(f"kernel {self.kernel} and stride {self.stride} must be >= 1")
        if min(self.padding) < 0:
            raise InvalidConvSpecError(f"padding {self.padding} must be >= 0")

    @classmethod
    def same(cls, in_channels: int, out_channels: int, kernel, stride=1) -> "ConvSpec":
        """Spec with padding kernel // 2 on every axis"""
        kernel = _triple(kernel, "kernel")
        return cls(in_channels, out_channels, kernel, stride, tuple(k // 2 for k in kernel))

    @classmethod
    def planar(cls, in_channels: int, out_channels: int, kernel, stride=1, padding=0) -> "ConvSpec":
        """2D spec expressed as a 3D spec with a unit temporal axis"""
        pair = lambda v: (v, v) if isinstance(v, int) else tuple(v)
        return cls(
            in_channels,
            out_channels,
            (1,) + pair(kernel),
            (1,) + pair(stride),
            (0,) + pair(padding),
        )

    @property
    def is_planar(self) -> bool:
        return self.kernel[0] == 1 and self.stride[0] == 1 and self.padding[0] == 0

    @property
    def fan_in(self) -> int:
        return self.in_channels * math.prod(self.kernel)

    def output_extents(self, extents: Sequence[int], op: str = "conv3d") -> Tuple[int, int, int]:
        """Output (T', H', W') of the forward convolution"""
        out = []
        for axis, (n, k, s, p) in enumerate(zip(extents, self.kernel, self.stride, self.padding)):
            if n + 2 * p < k:
                raise DegenerateOutputError(op, axis + 2, n + 2 * p - k + 1)
            extent = (n + 2 * p - k) // s + 1
            if extent < 1:
                raise DegenerateOutputError(op, axis + 2, extent)
            out.append(extent)
        return tuple(out)

    def transposed_extents(
        self, extents: Sequence[int], op: str = "conv_transpose3d", output_size: Sequence[int] = None
    ) -> Tuple[int, int, int]:
        """
        Output (T', H', W') of the transposed convolution.

        An explicit output_size may exceed the default (n - 1)*s - 2p + k by
        less than the stride on each axis.
        """
        out = []
        for axis, (n, k, s, p) in enumerate(zip(extents, self.kernel, self.stride, self.padding)):
            extent = (n - 1) * s - 2 * p + k
            if output_size is not None:
                want = int(output_size[axis])
                if not extent <= want < extent + s:
                    raise ShapeMismatchError(op, f"output_size[{axis}]", f"{extent}..{extent + s - 1}", want)
                extent = want
            if extent < 1:
                raise DegenerateOutputError(op, axis + 2, extent)
            out.append(extent)
        return tuple(out)


@dataclass
class GradPair:
    """A parameter value with its additive gradient accumulator"""
    value: Tensor
    grad: Tensor = field(init=False, repr=False)

    def __post_init__(self):
        self.value = check_tensor(self.value, "GradPair")
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, delta: Tensor) -> None:
        if delta.shape != self.value.shape:
            raise ShapeMismatchError("GradPair.accumulate", "shape", self.value.shape, delta.shape)
        self.grad += delta

    def reset(self) -> None:
        self.grad.fill(0)
