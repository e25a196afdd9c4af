"""
FLAVR network assembly: gated 3D encoder, gated 3D decoder with skip fusion,
and the 2D temporal fusion / prediction head.

The decoder mirrors the encoder block by block. Undoing a strided block uses a
transposed conv (kernel 4 on strided axes, 3 elsewhere, padding 1), undoing an
unstrided block a same-padded conv. The stage that undoes encoder block i
outputs the width of block i - 1 and is fused with block i - 1's output, so
every skip level has matching widths in add mode.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from vfi_tensor.services import kernels as K
from vfi_tensor.services.tensor import ConvSpec, GradPair, Tensor

from ..exceptions import BackwardBeforeForwardError, InputShapeError
from .layers import (
    ChannelGate,
    Conv2d,
    Conv3d,
    ConvUnit,
    Initializer,
    Parameters,
    ReLU,
    ResidualBlock,
    SeededInitializer,
    SharedInitializer,
    Unit,
    channel_gate,
)
from .models import FlavrConfig, FusionMode

logger = logging.getLogger(__name__)

__all__ = [
    "DecoderStagePlan",
    "Decoder",
    "Encoder",
    "Head",
    "Network",
    "build",
    "check_input",
    "channel_gate",
    "count_parameters",
    "decoder_plan",
    "export_encoder",
]

ENCODER_LEVELS = ("stem", "conv2", "conv3", "conv4", "conv5")


def _gate(config: FlavrConfig, name: str, channels: int, init: Initializer) -> Optional[ChannelGate]:
    return ChannelGate(name, channels, init) if config.gating_enabled else None


#----------------------------------------------------------------------------------------------------------------------------------------------
# Encoder
#----------------------------------------------------------------------------------------------------------------------------------------------

class Encoder:
    """
    Stem conv followed by residual blocks conv2 .. conv5.

    forward returns the conv5 feature map; the gated output of every level is
    retained in `features` for the decoder skips.
    """

    def __init__(self, config: FlavrConfig, init: Initializer):
        self.config = config
        widths = config.encoder_widths
        stem_spec = ConvSpec.same(3, widths[0], config.stem_kernel, config.block_stride(0))
        self.levels: List[Unit] = [
            ConvUnit(Conv3d("encoder.stem", stem_spec, init), _gate(config, "gate.enc.stem", widths[0], init))
        ]
        for level in range(1, 5):
            name = ENCODER_LEVELS[level]
            self.levels.append(ResidualBlock(
                f"encoder.{name}",
                widths[level - 1],
                widths[level],
                config.block_kernel,
                config.block_stride(level),
                init,
                _gate(config, f"gate.enc.{name}", widths[level], init),
            ))
        self.features: List[Tensor] = []
        self.forward_calls = 0

    def parameters(self) -> Parameters:
        for unit in self.levels:
            yield from unit.parameters()

    def relus(self) -> List[ReLU]:
        return [relu for unit in self.levels for relu in unit.relus()]

    def zero_grads(self) -> None:
        for _, pair in self.parameters():
            pair.reset()

    def forward(self, x: Tensor) -> Tensor:
        self.forward_calls += 1
        x = check_input(self.config, x)
        self.features = []
        for unit in self.levels:
            x = unit.forward(x)
            self.features.append(x)
        return x

    def backward(self, grad: Tensor, skip_grads: Optional[Dict[int, Tensor]] = None) -> Tensor:
        """
        Backpropagate from the conv5 output.

        Args:
            grad: Gradient w.r.t. the conv5 feature map
            skip_grads: Extra gradients w.r.t. earlier level outputs, by level

        Returns:
            Gradient w.r.t. the network input
        """
        if not self.features:
            raise BackwardBeforeForwardError("encoder")
        skip_grads = skip_grads or {}
        for level in reversed(range(len(self.levels))):
            if level in skip_grads:
                grad = grad + skip_grads[level]
            grad = self.levels[level].backward(grad)
        return grad


#----------------------------------------------------------------------------------------------------------------------------------------------
# Decoder
#----------------------------------------------------------------------------------------------------------------------------------------------

@dataclass(frozen=True)
class DecoderStagePlan:
    """Geometry of one decoder stage"""
    name: str
    encoder_level: int
    transposed: bool
    spec: ConvSpec
    skip_level: Optional[int]


def decoder_plan(config: FlavrConfig) -> List[DecoderStagePlan]:
    """
    Decoder stages in execution order, ending with the final 3D conv.

    Args:
        config: Network configuration

    Returns:
        One plan per stage; skip_level is the encoder level fused after the
        stage, or None
    """
    widths = config.encoder_widths
    fuse = config.fusion_mode != FusionMode.NONE
    stages: List[DecoderStagePlan] = []
    in_channels = widths[4]
    counters = {True: 0, False: 0}
    for level in reversed(range(5)):
        stride = config.block_stride(level)
        transposed = stride != (1, 1, 1)
        out_channels = widths[level - 1] if level > 0 else widths[0]
        if transposed:
            kernel = tuple(4 if s == 2 else 3 for s in stride)
            spec = ConvSpec(in_channels, out_channels, kernel, stride, (1, 1, 1))
        else:
            spec = ConvSpec.same(in_channels, out_channels, config.block_kernel)
        counters[transposed] += 1
        prefix = "up" if transposed else "conv"
        skip_level = level - 1 if fuse and level > 0 else None
        stages.append(DecoderStagePlan(f"{prefix}{counters[transposed]}", level, transposed, spec, skip_level))
        in_channels = out_channels
        if skip_level is not None and config.fusion_mode == FusionMode.CONCAT:
            in_channels += widths[skip_level]
    final = ConvSpec.same(in_channels, widths[0], config.block_kernel)
    stages.append(DecoderStagePlan("final", -1, False, final, None))
    return stages


class Decoder:
    """
    Mirror of the encoder from conv5 back to stem resolution.

    conv5 feeds the decoder directly. The stages undoing conv5, conv4, conv3
    and conv2 are each fused with the output of the level below, so the skips
    come from conv4, conv3, conv2 and the stem. The conv4 skip is an addition
    to the usual stem, conv2 and conv3 skips.
    """

    def __init__(self, config: FlavrConfig, init: Initializer):
        self.config = config
        self.plan = decoder_plan(config)
        self.stages: List[ConvUnit] = []
        for stage in self.plan:
            conv = Conv3d(f"decoder.{stage.name}", stage.spec, init, transposed=stage.transposed)
            gate = _gate(config, f"gate.dec.{stage.name}", stage.spec.out_channels, init)
            self.stages.append(ConvUnit(conv, gate))
        self.outputs: List[Tensor] = []

    def parameters(self) -> Parameters:
        for unit in self.stages:
            yield from unit.parameters()

    def relus(self) -> List[ReLU]:
        return [relu for unit in self.stages for relu in unit.relus()]

    def forward(self, features: Sequence[Tensor]) -> Tensor:
        x = features[-1]
        self.outputs = []
        for stage, unit in zip(self.plan, self.stages):
            x = unit.forward(x)
            self.outputs.append(x)
            if stage.skip_level is None:
                continue
            skip = features[stage.skip_level]
            if self.config.fusion_mode == FusionMode.ADD:
                x = x + skip
            else:
                x = K.concat([x, skip], axis=1)
        return x

    def backward(self, grad: Tensor) -> Tuple[Tensor, Dict[int, Tensor]]:
        """
        Returns:
            Tuple of (gradient w.r.t. the conv5 features, gradients w.r.t.
            the fused encoder levels)
        """
        if not self.outputs:
            raise BackwardBeforeForwardError("decoder")
        skip_grads: Dict[int, Tensor] = {}
        for stage, unit in zip(reversed(self.plan), reversed(self.stages)):
            if stage.skip_level is not None:
                if self.config.fusion_mode == FusionMode.ADD:
                    skip_grads[stage.skip_level] = grad
                else:
                    width = stage.spec.out_channels
                    grad, skip_grads[stage.skip_level] = K.split(
                        grad, [width, grad.shape[1] - width], axis=1
                    )
            grad = unit.backward(grad)
        return grad, skip_grads


#----------------------------------------------------------------------------------------------------------------------------------------------
# Head
#----------------------------------------------------------------------------------------------------------------------------------------------

class Head:
    """
    Folds time into channels ([B, C, T, H, W] -> [B, C*T, H, W], row-major),
    then fusion conv -> relu -> prediction conv, split into k - 1 RGB frames.
    """

    def __init__(self, config: FlavrConfig, init: Initializer):
        self.config = config
        channels = config.encoder_widths[0] * config.input_frames
        fk, pk = config.fusion_conv_kernel, config.prediction_kernel
        self.fusion = Conv2d("head.fusion", ConvSpec.planar(channels, config.fusion_width, fk, 1, fk // 2), init)
        self.relu = ReLU("head.fusion.relu")
        self.pred = Conv2d(
            "head.pred", ConvSpec.planar(config.fusion_width, 3 * config.output_frames, pk, 1, pk // 2), init
        )
        self._input_shape = None

    def parameters(self) -> Parameters:
        yield from self.fusion.parameters()
        yield from self.pred.parameters()

    def forward(self, x: Tensor) -> List[Tensor]:
        self._input_shape = x.shape
        batch, channels, frames, height, width = x.shape
        folded = K.reshape(x, (batch, channels * frames, height, width))
        out = self.pred.forward(self.relu.forward(self.fusion.forward(folded)))
        return K.split(out, [3] * self.config.output_frames, axis=1)

    def backward(self, grads: Sequence[Tensor]) -> Tensor:
        if self._input_shape is None:
            raise BackwardBeforeForwardError("head")
        if len(grads) != self.config.output_frames:
            raise InputShapeError(
                f"expected {self.config.output_frames} output gradient(s), got {len(grads)}"
            )
        grad = K.concat(list(grads), axis=1)
        grad = self.fusion.backward(self.relu.backward(self.pred.backward(grad)))
        return K.reshape(grad, self._input_shape)


#----------------------------------------------------------------------------------------------------------------------------------------------
# Network
#----------------------------------------------------------------------------------------------------------------------------------------------

def check_input(config: FlavrConfig, x) -> Tensor:
    """Validate a network input and cast it to the configured dtype"""
    x = np.asarray(x)
    if x.ndim != 5 or x.shape[1] != 3:
        raise InputShapeError(f"expected input [B, 3, {config.input_frames}, H, W], got {x.shape}", x.shape)
    if x.shape[2] != config.input_frames:
        raise InputShapeError(
            f"temporal extent {x.shape[2]} != 2 * context = {config.input_frames}", x.shape
        )
    factor = config.spatial_factor
    if x.shape[3] % factor or x.shape[4] % factor:
        raise InputShapeError(
            f"H and W must be divisible by {factor}, got {x.shape[3]}x{x.shape[4]}", x.shape
        )
    return np.ascontiguousarray(x, dtype=config.np_dtype)


class Network:
    """A built FLAVR network: 2C input frames in, k - 1 frames out"""

    def __init__(self, config: FlavrConfig, init: Initializer):
        self.config = config
        self.encoder = Encoder(config, init)
        self.decoder = Decoder(config, init)
        self.head = Head(config, init)
        self.forward_calls = 0
        self._relus = self.encoder.relus() + self.decoder.relus() + [self.head.relu]

    def parameters(self) -> Parameters:
        yield from self.encoder.parameters()
        yield from self.decoder.parameters()
        yield from self.head.parameters()

    def parameter_table(self) -> Dict[str, GradPair]:
        return dict(self.parameters())

    def zero_grads(self) -> None:
        for _, pair in self.parameters():
            pair.reset()

    def forward(self, x: Tensor) -> List[Tensor]:
        """
        Predict the k - 1 frames inside the central gap.

        Args:
            x: Input frames [B, 3, 2C, H, W]

        Returns:
            k - 1 tensors [B, 3, H, W], unclamped
        """
        self.forward_calls += 1
        self.encoder.forward(x)
        decoded = self.decoder.forward(self.encoder.features)
        return self.head.forward(decoded)

    def backward(self, grads: Sequence[Tensor]) -> Tensor:
        """
        Accumulate parameter gradients for the last forward pass.

        Args:
            grads: dLoss/dOutput for each of the k - 1 predicted frames

        Returns:
            Gradient w.r.t. the network input
        """
        if not self.encoder.features:
            raise BackwardBeforeForwardError("network")
        grad = self.head.backward(grads)
        grad, skip_grads = self.decoder.backward(grad)
        return self.encoder.backward(grad, skip_grads)

    def feature_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Shapes of the retained encoder and decoder activations"""
        if not self.encoder.features:
            raise BackwardBeforeForwardError("network")
        shapes = {f"encoder.{name}": f.shape for name, f in zip(ENCODER_LEVELS, self.encoder.features)}
        for stage, out in zip(self.decoder.plan, self.decoder.outputs):
            shapes[f"decoder.{stage.name}"] = out.shape
        return shapes

    def relu_masks(self) -> List[np.ndarray]:
        """Activation patterns of every ReLU in the last forward pass"""
        return [relu.mask() for relu in self._relus]


def build(config: FlavrConfig, seed: int) -> Network:
    """
    Build a network with deterministic parameters.

    Args:
        config: Validated network configuration
        seed: Initialization seed; equal seeds give bitwise-equal parameters

    Returns:
        The initialized Network
    """
    network = Network(config, SeededInitializer(seed, config.dtype))
    count = sum(pair.value.size for _, pair in network.parameters())
    logger.info(
        f"Built FLAVR network k={config.k} context={config.context} "
        f"fusion={config.fusion_mode.value} gating={config.gating_enabled} ({count} parameters)"
    )
    return network


def export_encoder(network: Network) -> Encoder:
    """An encoder-only network sharing its parameters with the given network"""
    table = {name: pair for name, pair in network.encoder.parameters()}
    return Encoder(network.config, SharedInitializer(table))


def count_parameters(config: FlavrConfig) -> int:
    """Number of scalar parameters of build(config), computed from shapes only"""
    widths = config.encoder_widths
    total = 0

    def conv(spec: ConvSpec) -> int:
        return spec.out_channels * spec.fan_in + spec.out_channels

    def gate(channels: int) -> int:
        return channels * channels + channels if config.gating_enabled else 0

    total += conv(ConvSpec.same(3, widths[0], config.stem_kernel)) + gate(widths[0])
    for level in range(1, 5):
        cin, cout = widths[level - 1], widths[level]
        total += conv(ConvSpec.same(cin, cout, config.block_kernel))
        total += conv(ConvSpec.same(cout, cout, config.block_kernel))
        if config.block_stride(level) != (1, 1, 1) or cin != cout:
            total += conv(ConvSpec(cin, cout, 1))
        total += gate(cout)
    for stage in decoder_plan(config):
        total += conv(stage.spec) + gate(stage.spec.out_channels)
    fk, pk = config.fusion_conv_kernel, config.prediction_kernel
    total += conv(ConvSpec.planar(widths[0] * config.input_frames, config.fusion_width, fk))
    total += conv(ConvSpec.planar(config.fusion_width, 3 * config.output_frames, pk))
    return total
