"""
Convolution, pointwise, pooling and reshaping kernels with exact gradients.

Convolutions are lowered to patch windows (numpy sliding windows) contracted
against the weights, accumulating in float64 and rounding to the input dtype
on store. Work is chunked per (batch, output time slice) or per batch element,
so every output element has a fixed reduction order regardless of the worker
count.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import InvalidConvSpecError, ShapeMismatchError
from .parallel import parallel_map
from .tensor import ConvSpec, Tensor, check_tensor

logger = logging.getLogger(__name__)

ACC = np.float64


#----------------------------------------------------------------------------------------------------------------------------------------------
# Operand checks
#----------------------------------------------------------------------------------------------------------------------------------------------

def _check_shape(op: str, name: str, expected: Sequence[int], actual: Sequence[int]) -> None:
    if len(expected) != len(actual):
        raise ShapeMismatchError(op, f"{name}.rank", len(expected), len(actual))
    for axis, (e, a) in enumerate(zip(expected, actual)):
        if e != a:
            raise ShapeMismatchError(op, f"{name}[{axis}]", e, a)


def _check_conv_operands(op: str, x, weight, bias, spec: ConvSpec, transposed: bool = False):
    x = check_tensor(x, op, rank=5)
    weight = check_tensor(weight, op, rank=5)
    if transposed:
        expected = (spec.in_channels, spec.out_channels) + spec.kernel
    else:
        expected = (spec.out_channels, spec.in_channels) + spec.kernel
    _check_shape(op, "weight", expected, weight.shape)
    if x.shape[1] != spec.in_channels:
        raise ShapeMismatchError(op, "input[1]", spec.in_channels, x.shape[1], "channel axis")
    if bias is not None:
        bias = check_tensor(bias, op, rank=1)
        _check_shape(op, "bias", (spec.out_channels,), bias.shape)
    return x, weight, bias


def _pad(x: np.ndarray, padding: Tuple[int, int, int]) -> np.ndarray:
    if not any(padding):
        return x
    pt, ph, pw = padding
    return np.pad(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))


def _crop(x: np.ndarray, padding: Tuple[int, int, int], extents: Sequence[int]) -> np.ndarray:
    pt, ph, pw = padding
    t, h, w = extents
    return x[:, :, pt:pt + t, ph:ph + h, pw:pw + w]


#----------------------------------------------------------------------------------------------------------------------------------------------
# Lowered convolution cores (float64 operands)
#----------------------------------------------------------------------------------------------------------------------------------------------

def _windows(xp_b: np.ndarray, t0: int, kernel, stride, out_hw) -> np.ndarray:
    """Patch windows of one batch element at one output time slice: [C, kt, H', W', kh, kw]"""
    kt, kh, kw = kernel
    _, sh, sw = stride
    ho, wo = out_hw
    slab = xp_b[:, t0:t0 + kt]
    win = sliding_window_view(slab, (kh, kw), axis=(2, 3))
    return win[:, :, ::sh, ::sw][:, :, :ho, :wo]


def _correlate(xp: np.ndarray, w: np.ndarray, stride, out_extents) -> np.ndarray:
    """Cross-correlate padded input xp [B, C, ...] with w [O, C, kt, kh, kw]"""
    batch = xp.shape[0]
    out_t, out_h, out_w = out_extents
    kernel = w.shape[2:]
    tasks = [(b, t) for b in range(batch) for t in range(out_t)]

    def slab(task):
        b, t = task
        win = _windows(xp[b], t * stride[0], kernel, stride, (out_h, out_w))
        return np.tensordot(w, win, axes=([1, 2, 3, 4], [0, 1, 4, 5]))

    out = np.empty((batch, w.shape[0], out_t, out_h, out_w), dtype=ACC)
    for (b, t), values in zip(tasks, parallel_map(slab, tasks)):
        out[b, :, t] = values
    return out


def _weight_grad(xp: np.ndarray, g: np.ndarray, kernel, stride) -> np.ndarray:
    """Gradient of a correlation w.r.t. its weight: [O, C, kt, kh, kw]"""
    batch, channels_out, out_t, out_h, out_w = g.shape
    tasks = [(b, t) for b in range(batch) for t in range(out_t)]

    def part(task):
        b, t = task
        win = _windows(xp[b], t * stride[0], kernel, stride, (out_h, out_w))
        return np.tensordot(g[b, :, t], win, axes=([1, 2], [2, 3]))

    total = np.zeros((channels_out, xp.shape[1]) + tuple(kernel), dtype=ACC)
    for values in parallel_map(part, tasks):
        total += values
    return total


def _scatter(g: np.ndarray, w: np.ndarray, stride, padded_extents) -> np.ndarray:
    """
    Adjoint of _correlate: spread g [B, O, T', H', W'] back through w [O, C, ...]
    into a zero buffer of shape [B, C, *padded_extents].
    """
    batch, _, out_t, out_h, out_w = g.shape
    kt, kh, kw = w.shape[2:]
    st, sh, sw = stride
    h_span = sh * (out_h - 1) + 1
    w_span = sw * (out_w - 1) + 1

    def one(b):
        acc = np.zeros((w.shape[1],) + tuple(padded_extents), dtype=ACC)
        for t in range(out_t):
            cols = np.tensordot(w, g[b, :, t], axes=([0], [0]))  # [C, kt, kh, kw, H', W']
            t0 = t * st
            for dt in range(kt):
                for dh in range(kh):
                    for dw in range(kw):
                        acc[:, t0 + dt, dh:dh + h_span:sh, dw:dw + w_span:sw] += cols[:, dt, dh, dw]
        return acc

    return np.stack(parallel_map(one, range(batch)))


def _transposed_view(spec: ConvSpec) -> ConvSpec:
    """The forward convolution whose adjoint is the given transposed convolution"""
    return ConvSpec(spec.out_channels, spec.in_channels, spec.kernel, spec.stride, spec.padding)


#----------------------------------------------------------------------------------------------------------------------------------------------
# 3D convolution
#----------------------------------------------------------------------------------------------------------------------------------------------

def conv3d(x: Tensor, weight: Tensor, bias: Optional[Tensor], spec: ConvSpec) -> Tensor:
    """
    3D cross-correlation with zeros padding.

    Args:
        x: Input [B, c_i, T, H, W]
        weight: Kernels [c_o, c_i, t, h, w]
        bias: Per output channel offsets [c_o], or None
        spec: Convolution geometry

    Returns:
        Output [B, c_o, T', H', W'] in the input dtype
    """
    x, weight, bias = _check_conv_operands("conv3d", x, weight, bias, spec)
    out_extents = spec.output_extents(x.shape[2:], "conv3d")
    xp = _pad(x.astype(ACC), spec.padding)
    out = _correlate(xp, weight.astype(ACC), spec.stride, out_extents)
    if bias is not None:
        out += bias.astype(ACC)[None, :, None, None, None]
    return out.astype(x.dtype, copy=False)


def conv3d_backward(grad_out: Tensor, x: Tensor, weight: Tensor, spec: ConvSpec) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Gradients of conv3d.

    Returns:
        Tuple of (grad_input, grad_weight, grad_bias)
    """
    op = "conv3d_backward"
    x, weight, _ = _check_conv_operands(op, x, weight, None, spec)
    out_extents = spec.output_extents(x.shape[2:], op)
    grad_out = check_tensor(grad_out, op, rank=5)
    _check_shape(op, "grad_out", (x.shape[0], spec.out_channels) + out_extents, grad_out.shape)

    g = grad_out.astype(ACC)
    xp = _pad(x.astype(ACC), spec.padding)
    grad_weight = _weight_grad(xp, g, spec.kernel, spec.stride)
    grad_bias = g.sum(axis=(0, 2, 3, 4))
    grad_padded = _scatter(g, weight.astype(ACC), spec.stride, xp.shape[2:])
    grad_input = _crop(grad_padded, spec.padding, x.shape[2:])
    return (
        grad_input.astype(x.dtype),
        grad_weight.astype(weight.dtype),
        grad_bias.astype(weight.dtype),
    )


#----------------------------------------------------------------------------------------------------------------------------------------------
# 3D transposed convolution
#----------------------------------------------------------------------------------------------------------------------------------------------

def conv_transpose3d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor],
    spec: ConvSpec,
    output_size: Optional[Sequence[int]] = None,
) -> Tensor:
    """
    Transposed 3D convolution, the adjoint of conv3d's linear map.

    Args:
        x: Input [B, c_in, T, H, W]
        weight: Kernels [c_in, c_out, t, h, w] (a conv3d weight read as its adjoint)
        bias: Per output channel offsets [c_out], or None
        spec: Geometry with in_channels = c_in and out_channels = c_out
        output_size: Optional (T', H', W'); each extent may exceed the default
            (in - 1)*s - 2p + kext by less than the stride, the extra rows being
            positions no input element reaches

    Returns:
        Output [B, c_out, T', H', W'] in the input dtype
    """
    op = "conv_transpose3d"
    x, weight, bias = _check_conv_operands(op, x, weight, bias, spec, transposed=True)
    out_extents = spec.transposed_extents(x.shape[2:], op, output_size)
    padded = tuple(n + 2 * p for n, p in zip(out_extents, spec.padding))
    yp = _scatter(x.astype(ACC), weight.astype(ACC), spec.stride, padded)
    y = _crop(yp, spec.padding, out_extents)
    if bias is not None:
        y = y + bias.astype(ACC)[None, :, None, None, None]
    return np.ascontiguousarray(y).astype(x.dtype, copy=False)


def conv_transpose3d_backward(
    grad_out: Tensor, x: Tensor, weight: Tensor, spec: ConvSpec
) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Gradients of conv_transpose3d.

    grad_out may carry the extra trailing rows allowed by output_size.

    Returns:
        Tuple of (grad_input, grad_weight, grad_bias)
    """
    op = "conv_transpose3d_backward"
    x, weight, _ = _check_conv_operands(op, x, weight, None, spec, transposed=True)
    grad_out = check_tensor(grad_out, op, rank=5)
    _check_shape(op, "grad_out[:2]", (x.shape[0], spec.out_channels), grad_out.shape[:2])
    spec.transposed_extents(x.shape[2:], op, grad_out.shape[2:])

    forward_view = _transposed_view(spec)
    g = grad_out.astype(ACC)
    gp = _pad(g, spec.padding)
    grad_input = _correlate(gp, weight.astype(ACC), spec.stride, x.shape[2:])
    grad_weight = _weight_grad(gp, x.astype(ACC), forward_view.kernel, forward_view.stride)
    grad_bias = g.sum(axis=(0, 2, 3, 4))
    return (
        grad_input.astype(x.dtype),
        grad_weight.astype(weight.dtype),
        grad_bias.astype(weight.dtype),
    )


#----------------------------------------------------------------------------------------------------------------------------------------------
# 2D convolution (t = 1 specialization)
#----------------------------------------------------------------------------------------------------------------------------------------------

def _check_planar(op: str, spec: ConvSpec) -> None:
    if not spec.is_planar:
        raise InvalidConvSpecError(f"{op}: spec {spec} is not planar (t = 1, s_t = 1, p_t = 0)")


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor], spec: ConvSpec) -> Tensor:
    """2D cross-correlation of x [B, c_i, H, W] with weight [c_o, c_i, h, w]"""
    _check_planar("conv2d", spec)
    x = check_tensor(x, "conv2d", rank=4)
    weight = check_tensor(weight, "conv2d", rank=4)
    return conv3d(x[:, :, None], weight[:, :, None], bias, spec)[:, :, 0]


def conv2d_backward(grad_out: Tensor, x: Tensor, weight: Tensor, spec: ConvSpec) -> Tuple[Tensor, Tensor, Tensor]:
    _check_planar("conv2d_backward", spec)
    grad_out = check_tensor(grad_out, "conv2d_backward", rank=4)
    x = check_tensor(x, "conv2d_backward", rank=4)
    weight = check_tensor(weight, "conv2d_backward", rank=4)
    gi, gw, gb = conv3d_backward(grad_out[:, :, None], x[:, :, None], weight[:, :, None], spec)
    return gi[:, :, 0], gw[:, :, 0], gb


#----------------------------------------------------------------------------------------------------------------------------------------------
# Pointwise and pooling
#----------------------------------------------------------------------------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    x = check_tensor(x, "relu")
    return np.maximum(x, 0).astype(x.dtype, copy=False)


def relu_backward(grad_out: Tensor, x: Tensor) -> Tensor:
    """Mask grad_out by x > 0 (subgradient 0 at the kink)"""
    _check_shape("relu_backward", "grad_out", x.shape, grad_out.shape)
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def sigmoid(x: Tensor) -> Tensor:
    """Elementwise 1 / (1 + exp(-x)), evaluated without overflow on either tail"""
    x = check_tensor(x, "sigmoid")
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    z = np.exp(x[~positive])
    out[~positive] = z / (1.0 + z)
    return out


def sigmoid_backward(grad_out: Tensor, y: Tensor) -> Tensor:
    """Gradient through sigmoid given its output y"""
    _check_shape("sigmoid_backward", "grad_out", y.shape, grad_out.shape)
    return grad_out * y * (1.0 - y)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over T, H, W: [B, C, T, H, W] -> [B, C]"""
    x = check_tensor(x, "global_avg_pool", rank=5)
    return x.astype(ACC).mean(axis=(2, 3, 4)).astype(x.dtype, copy=False)


def global_avg_pool_backward(grad_out: Tensor, input_shape: Sequence[int]) -> Tensor:
    op = "global_avg_pool_backward"
    _check_shape(op, "grad_out", tuple(input_shape[:2]), grad_out.shape)
    count = int(np.prod(input_shape[2:]))
    spread = grad_out[:, :, None, None, None] / count
    return np.ascontiguousarray(np.broadcast_to(spread, tuple(input_shape)))


#----------------------------------------------------------------------------------------------------------------------------------------------
# Element relocation
#----------------------------------------------------------------------------------------------------------------------------------------------

def concat(xs: Sequence[Tensor], axis: int) -> Tensor:
    """Join tensors along axis; every other extent must agree"""
    if not xs:
        raise ShapeMismatchError("concat", "inputs", ">= 1 tensor", 0)
    xs = [check_tensor(x, "concat") for x in xs]
    reference = xs[0].shape
    axis = axis % len(reference)
    for x in xs[1:]:
        if len(x.shape) != len(reference):
            raise ShapeMismatchError("concat", "rank", len(reference), len(x.shape))
        for a, (e, n) in enumerate(zip(reference, x.shape)):
            if a != axis and e != n:
                raise ShapeMismatchError("concat", a, e, n)
    return np.concatenate(xs, axis=axis)


def split(x: Tensor, sections: Sequence[int], axis: int) -> List[Tensor]:
    """Inverse of concat: cut x along axis into pieces of the given extents"""
    x = check_tensor(x, "split")
    if sum(sections) != x.shape[axis]:
        raise ShapeMismatchError("split", axis, sum(sections), x.shape[axis])
    bounds = np.cumsum(sections)[:-1]
    return [np.ascontiguousarray(part) for part in np.split(x, bounds, axis=axis)]


def reshape(x: Tensor, new_shape: Sequence[int]) -> Tensor:
    """Reinterpret the row-major buffer with a new shape"""
    x = check_tensor(x, "reshape")
    new_shape = tuple(int(n) for n in new_shape)
    if int(np.prod(new_shape)) != x.size:
        raise ShapeMismatchError("reshape", "size", x.size, int(np.prod(new_shape)))
    return x.reshape(new_shape)


def flip(x: Tensor, axis: int) -> Tensor:
    x = check_tensor(x, "flip")
    return np.ascontiguousarray(np.flip(x, axis=axis))
