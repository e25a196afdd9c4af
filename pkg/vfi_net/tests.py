import numpy as np
import numpy.testing as npt
from django.test import SimpleTestCase

from vfi_tensor.exceptions import ShapeMismatchError
from vfi_tensor.services.gradcheck import max_relative_error, numeric_gradient

from .exceptions import BackwardBeforeForwardError, InputShapeError, NetworkConfigError
from .services.gradcheck import check_network_gradients
from .services.layers import ChannelGate, SeededInitializer, channel_gate
from .services.models import FlavrConfig, FusionMode, LossMode
from .services.network import Encoder, build, count_parameters, decoder_plan, export_encoder


def naive_gate(f_in, weight, bias):
    """Per (batch, channel) loop version of the channel gate"""
    out = np.empty_like(f_in)
    batch, channels = f_in.shape[:2]
    for b in range(batch):
        pooled = [f_in[b, c].mean() for c in range(channels)]
        for c in range(channels):
            z = sum(weight[c, j] * pooled[j] for j in range(channels)) + bias[c]
            out[b, c] = f_in[b, c] * (1.0 / (1.0 + np.exp(-z)))
    return out


class FlavrConfigTests(SimpleTestCase):
    def test_defaults(self):
        config = FlavrConfig()
        self.assertEqual(config.encoder_widths, (64, 64, 128, 256, 512))
        self.assertEqual(config.spatial_stride_blocks, ("conv1", "conv3", "conv4"))
        self.assertEqual(config.spatial_factor, 8)
        self.assertEqual(config.fusion_mode, FusionMode.CONCAT)
        self.assertEqual(config.block_stride(0), (1, 2, 2))
        self.assertEqual(config.block_stride(1), (1, 1, 1))

    def test_parses_config_file_strings(self):
        config = FlavrConfig.from_lines([
            "k = 4",
            "context = 1  # two input frames",
            "encoder_widths = 4,4,8,8,8",
            "spatial_stride_blocks = conv4, conv1",
            "fusion_mode = add",
            "gating_enabled = false",
            "loss_mode = l1+perceptual",
        ])
        self.assertEqual(config.k, 4)
        self.assertEqual(config.encoder_widths, (4, 4, 8, 8, 8))
        self.assertEqual(config.spatial_stride_blocks, ("conv1", "conv4"))
        self.assertFalse(config.gating_enabled)
        self.assertEqual(config.loss_mode, LossMode.L1_PERCEPTUAL)
        self.assertEqual(FlavrConfig.from_lines(config.to_lines()), config)

    def test_no_spatial_strides(self):
        config = FlavrConfig.tiny(spatial_stride_blocks="none")
        self.assertEqual(config.spatial_stride_blocks, ())
        self.assertEqual(config.spatial_factor, 1)

    def test_invalid_values(self):
        for values in (
            {"k": 1},
            {"context": 0},
            {"temporal_stride": "1,3,1,1,1"},
            {"temporal_stride": "2,2,1,1,1", "context": 1},
            {"spatial_stride_blocks": "conv6"},
            {"block_kernel": "3,4,3"},
            {"prediction_kernel": 6},
            {"fusion_mode": "multiply"},
            {"momentum": 0.9},
        ):
            with self.subTest(values=values), self.assertRaises(NetworkConfigError):
                FlavrConfig.from_mapping(values)


class ChannelGateTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(21)
        self.f_in = self.rng.standard_normal((2, 3, 2, 3, 4))

    def test_zero_gate_halves(self):
        out = channel_gate(self.f_in, np.zeros((3, 3)), np.zeros(3))
        npt.assert_array_equal(out, 0.5 * self.f_in)

    def test_saturated_gate_is_identity(self):
        out = channel_gate(self.f_in, np.zeros((3, 3)), np.full(3, 40.0))
        self.assertLessEqual(np.abs(out - self.f_in).max(), 1e-12)

    def test_matches_naive_loop(self):
        weight = self.rng.standard_normal((3, 3))
        bias = self.rng.standard_normal(3)
        out = channel_gate(self.f_in, weight, bias)
        self.assertLessEqual(np.abs(out - naive_gate(self.f_in, weight, bias)).max(), 1e-12)

    def test_gradients(self):
        gate = ChannelGate("gate.test", 3, SeededInitializer(0, "float64"))
        gate.weight.value[...] = self.rng.standard_normal((3, 3))
        gate.bias.value[...] = self.rng.standard_normal(3)
        x = self.f_in.copy()
        proj = self.rng.standard_normal(x.shape)
        loss = lambda: float(np.sum(gate.forward(x) * proj))
        loss()
        grad_x = gate.backward(proj)
        for array, analytic in ((x, grad_x), (gate.weight.value, gate.weight.grad), (gate.bias.value, gate.bias.grad)):
            analytic = analytic.copy()
            numeric = numeric_gradient(loss, array).reshape(array.shape)
            self.assertLessEqual(max_relative_error(analytic, numeric, floor=1e-3), 1e-6)

    def test_dimension_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            channel_gate(self.f_in, np.zeros((4, 4)), np.zeros(4))


class BuildTests(SimpleTestCase):
    def test_equal_seeds_give_identical_parameters(self):
        config = FlavrConfig.tiny()
        first = build(config, seed=5).parameter_table()
        second = build(config, seed=5).parameter_table()
        other = build(config, seed=6).parameter_table()
        self.assertEqual(list(first), list(second))
        for name in first:
            self.assertEqual(first[name].value.tobytes(), second[name].value.tobytes())
        self.assertFalse(np.array_equal(first["encoder.stem.weight"].value, other["encoder.stem.weight"].value))

    def test_naming_convention(self):
        names = set(build(FlavrConfig.tiny(), seed=0).parameter_table())
        for name in (
            "encoder.stem.weight",
            "encoder.conv3.0.weight",
            "encoder.conv3.proj.weight",
            "decoder.up1.weight",
            "decoder.final.bias",
            "gate.enc.conv2.W",
            "gate.dec.up1.b",
            "head.fusion.weight",
            "head.pred.weight",
        ):
            self.assertIn(name, names)
        self.assertNotIn("encoder.conv2.proj.weight", names)

    def test_fusion_modes_share_names(self):
        concat = build(FlavrConfig.tiny(), seed=1).parameter_table()
        none = build(FlavrConfig.tiny(fusion_mode="none"), seed=1).parameter_table()
        self.assertEqual(list(concat), list(none))
        differing = [n for n in concat if concat[n].shape != none[n].shape]
        self.assertTrue(differing)
        for name in differing:
            self.assertTrue(name.startswith("decoder.") and name.endswith(".weight"), name)
            changed_axes = [a for a, (c, n) in enumerate(zip(concat[name].shape, none[name].shape)) if c != n]
            self.assertEqual(len(changed_axes), 1)

    def test_fusion_none_decoder_reads_no_skips(self):
        self.assertTrue(all(stage.skip_level is None for stage in decoder_plan(FlavrConfig(fusion_mode="none"))))
        self.assertEqual(
            [stage.skip_level for stage in decoder_plan(FlavrConfig())], [3, 2, 1, 0, None, None]
        )

    def test_add_fusion_widths_match(self):
        config = FlavrConfig(fusion_mode="add")
        for stage in decoder_plan(config):
            if stage.skip_level is not None:
                self.assertEqual(stage.spec.out_channels, config.encoder_widths[stage.skip_level])

    def test_default_parameter_count_matches_tally(self):
        def conv(cin, cout, volume):
            return cout * cin * volume + cout

        def gate(channels):
            return channels * channels + channels

        encoder = [
            conv(3, 64, 3 * 7 * 7), gate(64),
            conv(64, 64, 27), conv(64, 64, 27), gate(64),
            conv(64, 128, 27), conv(128, 128, 27), conv(64, 128, 1), gate(128),
            conv(128, 256, 27), conv(256, 256, 27), conv(128, 256, 1), gate(256),
            conv(256, 512, 27), conv(512, 512, 27), conv(256, 512, 1), gate(512),
        ]
        decoder = [
            conv(512, 256, 27), gate(256),
            conv(256 + 256, 128, 3 * 4 * 4), gate(128),
            conv(128 + 128, 64, 3 * 4 * 4), gate(64),
            conv(64 + 64, 64, 27), gate(64),
            conv(64 + 64, 64, 3 * 4 * 4), gate(64),
            conv(64, 64, 27), gate(64),
        ]
        head = [conv(64 * 4, 64, 3 * 3), conv(64, 3, 7 * 7)]
        self.assertEqual(count_parameters(FlavrConfig()), sum(encoder + decoder + head))

    def test_count_matches_built_network(self):
        for config in (FlavrConfig.tiny(), FlavrConfig.tiny(gating_enabled=False, fusion_mode="add", k=4)):
            net = build(config, seed=0)
            self.assertEqual(count_parameters(config), sum(p.value.size for _, p in net.parameters()))


class ForwardTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(4)

    def frames(self, context, size=64, batch=1, dtype=np.float32):
        return self.rng.uniform(0, 1, size=(batch, 3, 2 * context, size, size)).astype(dtype)

    def test_single_output_frame(self):
        net = build(FlavrConfig.tiny(k=2, context=2), seed=0)
        outputs = net.forward(self.frames(2))
        self.assertEqual(len(outputs), 1)
        self.assertEqual(outputs[0].shape, (1, 3, 64, 64))
        self.assertEqual(outputs[0].dtype, np.float32)

    def test_shape_matrix(self):
        for k in (2, 4, 8):
            for context in (1, 2, 3):
                with self.subTest(k=k, context=context):
                    net = build(FlavrConfig.tiny(k=k, context=context), seed=0)
                    outputs = net.forward(self.frames(context))
                    self.assertEqual(len(outputs), k - 1)
                    for out in outputs:
                        self.assertEqual(out.shape, (1, 3, 64, 64))
                    for name, shape in net.feature_shapes().items():
                        self.assertEqual(shape[2], 2 * context, name)

    def test_all_frames_in_one_pass(self):
        net = build(FlavrConfig.tiny(k=8), seed=0)
        outputs = net.forward(self.frames(2))
        self.assertEqual(len(outputs), 7)
        self.assertEqual(net.forward_calls, 1)

    def test_zero_network_outputs_zero(self):
        net = build(FlavrConfig.tiny(k=4), seed=0)
        for _, pair in net.parameters():
            pair.value[...] = 0
        for out in net.forward(self.frames(2)):
            self.assertTrue(np.all(out == 0))

    def test_add_and_none_fusion_run(self):
        for mode in ("add", "none"):
            net = build(FlavrConfig.tiny(fusion_mode=mode), seed=0)
            self.assertEqual(net.forward(self.frames(2, size=16))[0].shape, (1, 3, 16, 16))

    def test_temporal_stride(self):
        net = build(FlavrConfig.tiny(temporal_stride="1,2,1,1,1"), seed=0)
        self.assertEqual(net.forward(self.frames(2, size=16))[0].shape, (1, 3, 16, 16))
        shapes = net.feature_shapes()
        self.assertEqual(shapes["encoder.conv5"][2], 2)
        self.assertEqual(shapes["decoder.final"][2], 4)

    def test_input_shape_errors(self):
        net = build(FlavrConfig.tiny(), seed=0)
        with self.assertRaises(InputShapeError):
            net.forward(self.frames(3))
        with self.assertRaises(InputShapeError):
            net.forward(self.rng.uniform(size=(1, 3, 4, 60, 64)))
        with self.assertRaises(InputShapeError):
            net.forward(self.rng.uniform(size=(1, 1, 4, 64, 64)))

    def test_gating_disabled_matches_saturated_gates(self):
        gated = build(FlavrConfig.tiny(dtype="float64"), seed=3)
        plain = build(FlavrConfig.tiny(dtype="float64", gating_enabled=False), seed=3)
        gated_table, plain_table = gated.parameter_table(), plain.parameter_table()
        extra = set(gated_table) - set(plain_table)
        self.assertTrue(extra and all(name.startswith("gate.") for name in extra))
        self.assertFalse(set(plain_table) - set(gated_table))
        for name, pair in plain_table.items():
            self.assertEqual(pair.value.tobytes(), gated_table[name].value.tobytes())
        for name in extra:
            gated_table[name].value[...] = 0.0 if name.endswith(".W") else 40.0

        x = self.frames(2, size=16, dtype=np.float64)
        for a, b in zip(gated.forward(x), plain.forward(x)):
            self.assertLessEqual(np.abs(a - b).max(), 1e-10)


class BackwardTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(12)
        self.config = FlavrConfig.tiny(dtype="float64", k=2, context=2)
        self.net = build(self.config, seed=0)
        self.x = self.rng.uniform(0, 1, size=(1, 3, 4, 16, 16))
        self.proj = self.rng.standard_normal((1, 3, 16, 16))

    def test_backward_before_forward(self):
        with self.assertRaises(BackwardBeforeForwardError):
            self.net.backward([self.proj])

    def test_zero_loss_gradient(self):
        self.net.forward(self.x)
        self.net.backward([np.zeros_like(self.proj)])
        for _, pair in self.net.parameters():
            self.assertFalse(np.any(pair.grad))

    def test_gradients_accumulate(self):
        self.net.forward(self.x)
        self.net.backward([self.proj])
        once = {name: pair.grad.copy() for name, pair in self.net.parameters()}
        self.net.backward([self.proj])
        for name, pair in self.net.parameters():
            npt.assert_array_equal(pair.grad, 2 * once[name])
        self.net.zero_grads()
        for _, pair in self.net.parameters():
            self.assertFalse(np.any(pair.grad))

    def test_end_to_end_finite_differences(self):
        report = check_network_gradients(self.config, seed=0)
        self.assertGreater(report.probes, report.skipped)
        self.assertIn("head.pred.weight", report.worst)
        self.assertTrue(report.passed(1e-5), report.worst)


class ExportEncoderTests(SimpleTestCase):
    def test_default_encoder_output_shape(self):
        encoder = Encoder(FlavrConfig(), SeededInitializer(0))
        x = np.random.default_rng(0).uniform(size=(1, 3, 4, 64, 64)).astype(np.float32)
        self.assertEqual(encoder.forward(x).shape, (1, 512, 4, 8, 8))

    def test_exported_encoder_shares_parameters(self):
        net = build(FlavrConfig.tiny(), seed=2)
        encoder = export_encoder(net)
        table = net.parameter_table()
        names = [name for name, _ in encoder.parameters()]
        self.assertEqual(
            set(names), {n for n in table if n.startswith("encoder.") or n.startswith("gate.enc.")}
        )
        for name, pair in encoder.parameters():
            self.assertIs(pair, table[name])

        x = np.random.default_rng(1).uniform(size=(1, 3, 4, 32, 32)).astype(np.float32)
        net.forward(x)
        self.assertEqual(encoder.forward(x).tobytes(), net.encoder.features[-1].tobytes())
