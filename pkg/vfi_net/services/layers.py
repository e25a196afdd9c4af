"""
Differentiable building blocks of the FLAVR network.

Every layer retains its forward inputs until the next forward pass, accumulates
parameter gradients additively in backward, and names its parameters with the
dotted convention used by checkpoints (`encoder.conv3.0.weight`,
`gate.dec.up1.W`, ...).
"""
import logging
import math
import zlib
from typing import Dict, Iterator, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from vfi_tensor.exceptions import ShapeMismatchError
from vfi_tensor.services import kernels as K
from vfi_tensor.services.tensor import ConvSpec, GradPair, Tensor

from ..exceptions import BackwardBeforeForwardError

logger = logging.getLogger(__name__)

Parameters = Iterator[Tuple[str, GradPair]]


#----------------------------------------------------------------------------------------------------------------------------------------------
# Initializers
#----------------------------------------------------------------------------------------------------------------------------------------------

class Initializer(Protocol):
    def __call__(self, name: str, shape: Tuple[int, ...], fan_in: int) -> GradPair:
        ...


class SeededInitializer:
    """
    Uniform(-s, s) with s = sqrt(1 / fan_in).

    Each parameter draws from its own generator keyed by (seed, crc32(name)),
    so a parameter's value depends only on the seed and its name, never on
    which other layers the network contains.
    """

    def __init__(self, seed: int, dtype="float32"):
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)

    def __call__(self, name: str, shape: Tuple[int, ...], fan_in: int) -> GradPair:
        rng = np.random.default_rng([self.seed, zlib.crc32(name.encode("utf-8"))])
        bound = math.sqrt(1.0 / fan_in)
        return GradPair(rng.uniform(-bound, bound, size=shape).astype(self.dtype))


class SharedInitializer:
    """Hands out existing GradPairs by name, so two networks share parameters"""

    def __init__(self, table: Dict[str, GradPair]):
        self.table = table

    def __call__(self, name: str, shape: Tuple[int, ...], fan_in: int) -> GradPair:
        pair = self.table[name]
        if pair.shape != tuple(shape):
            raise ShapeMismatchError("SharedInitializer", name, tuple(shape), pair.shape)
        return pair


#----------------------------------------------------------------------------------------------------------------------------------------------
# Layers
#----------------------------------------------------------------------------------------------------------------------------------------------

class Layer:
    """A named step with a retained forward input"""

    def __init__(self, name: str):
        self.name = name
        self._cache = None

    def parameters(self) -> Parameters:
        return iter(())

    def retained(self):
        if self._cache is None:
            raise BackwardBeforeForwardError(self.name)
        return self._cache


class Conv3d(Layer):
    """3D convolution, or its transpose when transposed=True"""

    def __init__(self, name: str, spec: ConvSpec, init: Initializer, transposed: bool = False):
        super().__init__(name)
        self.spec = spec
        self.transposed = transposed
        if transposed:
            shape = (spec.in_channels, spec.out_channels) + spec.kernel
        else:
            shape = (spec.out_channels, spec.in_channels) + spec.kernel
        self.weight = init(f"{name}.weight", shape, spec.fan_in)
        self.bias = init(f"{name}.bias", (spec.out_channels,), spec.fan_in)

    def parameters(self) -> Parameters:
        yield f"{self.name}.weight", self.weight
        yield f"{self.name}.bias", self.bias

    def forward(self, x: Tensor) -> Tensor:
        self._cache = x
        if self.transposed:
            return K.conv_transpose3d(x, self.weight.value, self.bias.value, self.spec)
        return K.conv3d(x, self.weight.value, self.bias.value, self.spec)

    def backward(self, grad: Tensor) -> Tensor:
        x = self.retained()
        backward = K.conv_transpose3d_backward if self.transposed else K.conv3d_backward
        grad_input, grad_weight, grad_bias = backward(grad, x, self.weight.value, self.spec)
        self.weight.accumulate(grad_weight)
        self.bias.accumulate(grad_bias)
        return grad_input


class Conv2d(Layer):
    def __init__(self, name: str, spec: ConvSpec, init: Initializer):
        super().__init__(name)
        self.spec = spec
        kernel = spec.kernel[1:]
        self.weight = init(f"{name}.weight", (spec.out_channels, spec.in_channels) + kernel, spec.fan_in)
        self.bias = init(f"{name}.bias", (spec.out_channels,), spec.fan_in)

    def parameters(self) -> Parameters:
        yield f"{self.name}.weight", self.weight
        yield f"{self.name}.bias", self.bias

    def forward(self, x: Tensor) -> Tensor:
        self._cache = x
        return K.conv2d(x, self.weight.value, self.bias.value, self.spec)

    def backward(self, grad: Tensor) -> Tensor:
        grad_input, grad_weight, grad_bias = K.conv2d_backward(grad, self.retained(), self.weight.value, self.spec)
        self.weight.accumulate(grad_weight)
        self.bias.accumulate(grad_bias)
        return grad_input


class ReLU(Layer):
    def forward(self, x: Tensor) -> Tensor:
        self._cache = x
        return K.relu(x)

    def backward(self, grad: Tensor) -> Tensor:
        return K.relu_backward(grad, self.retained())

    def mask(self) -> np.ndarray:
        """Activation pattern of the last forward pass"""
        return self.retained() > 0


def gate_values(f_in: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """sigmoid(W . pool(f_in) + b) per (batch, channel): [B, C]"""
    channels = f_in.shape[1]
    if weight.shape != (channels, channels):
        raise ShapeMismatchError("channel_gate", "W", (channels, channels), weight.shape)
    if bias.shape != (channels,):
        raise ShapeMismatchError("channel_gate", "b", (channels,), bias.shape)
    pooled = K.global_avg_pool(f_in)
    return K.sigmoid(pooled @ weight.T + bias)


def channel_gate(f_in: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """
    Scale every channel of f_in by its gate value.

    Args:
        f_in: Feature map [B, C, T, H, W]
        weight: Gate weight W [C, C]
        bias: Gate bias b [C]

    Returns:
        f_in * sigmoid(W . pool(f_in) + b), broadcast over T, H, W
    """
    gate = gate_values(f_in, weight, bias)
    return f_in * gate[:, :, None, None, None]


class ChannelGate(Layer):
    """Learned per-channel attention over a pooled feature map"""

    def __init__(self, name: str, channels: int, init: Initializer):
        super().__init__(name)
        self.channels = channels
        self.weight = init(f"{name}.W", (channels, channels), channels)
        self.bias = init(f"{name}.b", (channels,), channels)

    def parameters(self) -> Parameters:
        yield f"{self.name}.W", self.weight
        yield f"{self.name}.b", self.bias

    def forward(self, x: Tensor) -> Tensor:
        gate = gate_values(x, self.weight.value, self.bias.value)
        self._cache = (x, gate)
        return x * gate[:, :, None, None, None]

    def backward(self, grad: Tensor) -> Tensor:
        x, gate = self.retained()
        pooled = K.global_avg_pool(x)
        grad_gate = np.sum(grad * x, axis=(2, 3, 4))
        grad_z = K.sigmoid_backward(grad_gate, gate)
        self.weight.accumulate(grad_z.T @ pooled)
        self.bias.accumulate(grad_z.sum(axis=0))
        grad_pooled = grad_z @ self.weight.value
        return grad * gate[:, :, None, None, None] + K.global_avg_pool_backward(grad_pooled, x.shape)


#----------------------------------------------------------------------------------------------------------------------------------------------
# Composite units
#----------------------------------------------------------------------------------------------------------------------------------------------

class Unit:
    """Ordered collection of layers; subclasses define forward and backward"""

    def layers(self) -> List[Layer]:
        raise NotImplementedError

    def parameters(self) -> Parameters:
        for layer in self.layers():
            yield from layer.parameters()

    def relus(self) -> List[ReLU]:
        return [layer for layer in self.layers() if isinstance(layer, ReLU)]


class ConvUnit(Unit):
    """conv (or transposed conv) -> relu -> optional gate"""

    def __init__(self, conv: Conv3d, gate: Optional[ChannelGate]):
        self.conv = conv
        self.relu = ReLU(f"{conv.name}.relu")
        self.gate = gate

    def layers(self) -> List[Layer]:
        return [self.conv, self.relu] + ([self.gate] if self.gate else [])

    def forward(self, x: Tensor) -> Tensor:
        x = self.relu.forward(self.conv.forward(x))
        return self.gate.forward(x) if self.gate else x

    def backward(self, grad: Tensor) -> Tensor:
        if self.gate:
            grad = self.gate.backward(grad)
        return self.conv.backward(self.relu.backward(grad))


class ResidualBlock(Unit):
    """
    relu(conv1(relu(conv0(x))) + skip(x)) -> optional gate.

    The skip is the identity, or a 1x1x1 projection when the block changes
    the stride or the width.
    """

    def __init__(
        self,
        name: str,
        in_channels: int,
        out_channels: int,
        kernel: Sequence[int],
        stride: Sequence[int],
        init: Initializer,
        gate: Optional[ChannelGate],
    ):
        self.name = name
        self.conv0 = Conv3d(f"{name}.0", ConvSpec.same(in_channels, out_channels, kernel, stride), init)
        self.relu0 = ReLU(f"{name}.0.relu")
        self.conv1 = Conv3d(f"{name}.1", ConvSpec.same(out_channels, out_channels, kernel), init)
        self.proj = None
        if tuple(stride) != (1, 1, 1) or in_channels != out_channels:
            self.proj = Conv3d(f"{name}.proj", ConvSpec(in_channels, out_channels, 1, stride), init)
        self.relu1 = ReLU(f"{name}.1.relu")
        self.gate = gate

    def layers(self) -> List[Layer]:
        layers = [self.conv0, self.relu0, self.conv1]
        if self.proj:
            layers.append(self.proj)
        layers.append(self.relu1)
        if self.gate:
            layers.append(self.gate)
        return layers

    def forward(self, x: Tensor) -> Tensor:
        residual = self.conv1.forward(self.relu0.forward(self.conv0.forward(x)))
        skip = self.proj.forward(x) if self.proj else x
        out = self.relu1.forward(residual + skip)
        return self.gate.forward(out) if self.gate else out

    def backward(self, grad: Tensor) -> Tensor:
        if self.gate:
            grad = self.gate.backward(grad)
        grad = self.relu1.backward(grad)
        grad_input = self.conv0.backward(self.relu0.backward(self.conv1.backward(grad)))
        return grad_input + (self.proj.backward(grad) if self.proj else grad)
