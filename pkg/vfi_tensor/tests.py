import tempfile
from pathlib import Path

import numpy as np
import numpy.testing as npt
from django.test import SimpleTestCase

from .exceptions import DegenerateOutputError, ShapeMismatchError, TensorFileError
from .services import kernels as K
from .services.gradcheck import max_relative_error, numeric_gradient
from .services.oracles import (
    conv2d_direct,
    conv3d_direct,
    conv_transpose3d_direct,
    global_avg_pool_naive,
)
from .services.parallel import get_num_workers, set_num_workers
from .services.tensor import ConvSpec, GradPair, row_major_offset
from .services.tensor_io import read_tensor, tensor_from_bytes, tensor_to_bytes, write_tensor


def random_conv_case(rng, max_extent=8):
    """A random conv geometry whose output is non-degenerate"""
    while True:
        kernel = tuple(int(k) for k in rng.integers(1, 4, size=3))
        stride = tuple(int(s) for s in rng.integers(1, 3, size=3))
        padding = tuple(int(rng.integers(0, k)) for k in kernel)
        extents = tuple(int(n) for n in rng.integers(1, max_extent + 1, size=3))
        if all(n + 2 * p >= k for n, p, k in zip(extents, padding, kernel)):
            spec = ConvSpec(int(rng.integers(1, 3)), int(rng.integers(1, 3)), kernel, stride, padding)
            return spec, (int(rng.integers(1, 3)), spec.in_channels) + extents


class TensorInvariantTests(SimpleTestCase):
    def test_row_major_offset(self):
        shape = (2, 3, 4)
        x = np.arange(24, dtype=np.float64).reshape(shape)
        for idx in np.ndindex(*shape):
            self.assertEqual(x.ravel()[row_major_offset(idx, shape)], x[idx])

    def test_grad_pair_accumulates_and_resets(self):
        pair = GradPair(np.ones((2, 2)))
        npt.assert_array_equal(pair.grad, np.zeros((2, 2)))
        pair.accumulate(np.full((2, 2), 0.5))
        pair.accumulate(np.full((2, 2), 0.5))
        npt.assert_array_equal(pair.grad, np.ones((2, 2)))
        pair.reset()
        npt.assert_array_equal(pair.grad, np.zeros((2, 2)))
        with self.assertRaises(ShapeMismatchError):
            pair.accumulate(np.ones(3))


class Conv3dTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_scalar_kernel_scales_input(self):
        x = np.ones((1, 1, 2, 2, 2))
        w = np.full((1, 1, 1, 1, 1), 2.0)
        out = K.conv3d(x, w, np.zeros(1), ConvSpec(1, 1, 1))
        npt.assert_array_equal(out, np.full((1, 1, 2, 2, 2), 2.0))

    def test_delta_kernel_is_identity(self):
        x = self.rng.standard_normal((2, 1, 4, 5, 6))
        w = np.zeros((1, 1, 3, 3, 3))
        w[0, 0, 1, 1, 1] = 1.0
        out = K.conv3d(x, w, np.zeros(1), ConvSpec(1, 1, 3, 1, 1))
        npt.assert_array_equal(out, x)

    def test_matches_direct_summation(self):
        x = self.rng.standard_normal((2, 3, 4, 8, 8))
        w = self.rng.standard_normal((5, 3, 3, 3, 3))
        b = self.rng.standard_normal(5)
        spec = ConvSpec(3, 5, 3, (1, 2, 2), (1, 1, 1))
        out = K.conv3d(x, w, b, spec)
        self.assertEqual(out.shape, (2, 5, 4, 4, 4))
        self.assertLessEqual(np.abs(out - conv3d_direct(x, w, b, spec)).max(), 1e-12)

    def test_float32_matches_oracle(self):
        x = self.rng.standard_normal((1, 2, 3, 6, 6)).astype(np.float32)
        w = self.rng.standard_normal((2, 2, 3, 3, 3)).astype(np.float32)
        spec = ConvSpec(2, 2, 3, 1, 1)
        out = K.conv3d(x, w, None, spec)
        self.assertEqual(out.dtype, np.float32)
        self.assertLessEqual(np.abs(out - conv3d_direct(x, w, None, spec)).max(), 1e-5)

    def test_zero_input_gives_bias_exactly(self):
        b = self.rng.standard_normal(4)
        out = K.conv3d(np.zeros((1, 2, 3, 5, 5)), self.rng.standard_normal((4, 2, 3, 3, 3)), b, ConvSpec(2, 4, 3, 1, 1))
        npt.assert_array_equal(out, np.broadcast_to(b[None, :, None, None, None], out.shape))

    def test_channel_mismatch_names_axis(self):
        with self.assertRaises(ShapeMismatchError) as ctx:
            K.conv3d(np.ones((1, 2, 2, 2, 2)), np.ones((1, 3, 1, 1, 1)), None, ConvSpec(3, 1, 1))
        self.assertEqual(ctx.exception.axis, "input[1]")

    def test_degenerate_output(self):
        with self.assertRaises(DegenerateOutputError):
            K.conv3d(np.ones((1, 1, 2, 2, 2)), np.ones((1, 1, 3, 3, 3)), None, ConvSpec(1, 1, 3))

    def test_deterministic_across_worker_counts(self):
        x = self.rng.standard_normal((3, 2, 4, 8, 8))
        w = self.rng.standard_normal((3, 2, 3, 3, 3))
        spec = ConvSpec(2, 3, 3, (1, 2, 2), 1)
        previous = get_num_workers()
        try:
            set_num_workers(1)
            single = K.conv3d(x, w, None, spec)
            grads_single = K.conv3d_backward(np.ones_like(single), x, w, spec)
            set_num_workers(4)
            multi = K.conv3d(x, w, None, spec)
            grads_multi = K.conv3d_backward(np.ones_like(multi), x, w, spec)
        finally:
            set_num_workers(previous)
        self.assertEqual(single.tobytes(), multi.tobytes())
        for a, b in zip(grads_single, grads_multi):
            self.assertEqual(a.tobytes(), b.tobytes())


class ConvolutionOracleSweepTests(SimpleTestCase):
    """Random geometry draws against the brute-force loops"""

    def test_random_draws(self):
        rng = np.random.default_rng(2024)
        for _ in range(200):
            spec, shape = random_conv_case(rng)
            x = rng.standard_normal(shape)
            w = rng.standard_normal((spec.out_channels, spec.in_channels) + spec.kernel)
            b = rng.standard_normal(spec.out_channels)
            self.assertLessEqual(np.abs(K.conv3d(x, w, b, spec) - conv3d_direct(x, w, b, spec)).max(), 1e-12)

            t_spec = ConvSpec(spec.out_channels, spec.in_channels, spec.kernel, spec.stride, spec.padding)
            y = rng.standard_normal((shape[0], spec.out_channels) + spec.output_extents(shape[2:]))
            try:
                t_spec.transposed_extents(y.shape[2:])
            except DegenerateOutputError:
                continue
            got = K.conv_transpose3d(y, w, None, t_spec)
            self.assertLessEqual(np.abs(got - conv_transpose3d_direct(y, w, None, t_spec)).max(), 1e-12)

    def test_planar_draws(self):
        rng = np.random.default_rng(99)
        for _ in range(50):
            kernel = tuple(int(k) for k in rng.integers(1, 4, size=2))
            stride = tuple(int(s) for s in rng.integers(1, 3, size=2))
            padding = tuple(int(rng.integers(0, k)) for k in kernel)
            extents = tuple(int(max(n, k)) for n, k in zip(rng.integers(1, 9, size=2), kernel))
            spec = ConvSpec.planar(2, 3, kernel, stride, padding)
            x = rng.standard_normal((2, 2) + extents)
            w = rng.standard_normal((3, 2) + kernel)
            b = rng.standard_normal(3)
            self.assertLessEqual(np.abs(K.conv2d(x, w, b, spec) - conv2d_direct(x, w, b, spec)).max(), 1e-12)


class ConvTranspose3dTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(11)

    def test_disjoint_stride_two_scatter(self):
        x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 1, 1, 2, 2)
        w = np.ones((1, 1, 1, 2, 2))
        out = K.conv_transpose3d(x, w, np.zeros(1), ConvSpec(1, 1, (1, 2, 2), (1, 2, 2), 0))
        expected = np.kron(x[0, 0, 0], np.ones((2, 2)))
        self.assertEqual(out.shape, (1, 1, 1, 4, 4))
        npt.assert_array_equal(out[0, 0, 0], expected)

    def test_scalar_kernel(self):
        x = self.rng.standard_normal((1, 1, 2, 3, 3))
        out = K.conv_transpose3d(x, np.full((1, 1, 1, 1, 1), 3.0), None, ConvSpec(1, 1, 1))
        npt.assert_array_equal(out, 3.0 * x)

    def test_upsampling_kernel_doubles_extents(self):
        x = self.rng.standard_normal((1, 4, 2, 4, 4))
        w = self.rng.standard_normal((4, 2, 3, 4, 4))
        spec = ConvSpec(4, 2, (3, 4, 4), (1, 2, 2), (1, 1, 1))
        out = K.conv_transpose3d(x, w, None, spec)
        self.assertEqual(out.shape, (1, 2, 2, 8, 8))
        npt.assert_allclose(out, conv_transpose3d_direct(x, w, None, spec), atol=1e-12)

    def test_adjoint_identity(self):
        for _ in range(20):
            spec, shape = random_conv_case(self.rng)
            x = self.rng.standard_normal(shape)
            w = self.rng.standard_normal((spec.out_channels, spec.in_channels) + spec.kernel)
            y_shape = (shape[0], spec.out_channels) + spec.output_extents(shape[2:])
            y = self.rng.standard_normal(y_shape)
            t_spec = ConvSpec(spec.out_channels, spec.in_channels, spec.kernel, spec.stride, spec.padding)
            lhs = np.vdot(K.conv3d(x, w, None, spec), y)
            rhs = np.vdot(x, K.conv_transpose3d(y, w, None, t_spec, output_size=shape[2:]))
            self.assertLessEqual(abs(lhs - rhs), 1e-10 * max(1.0, abs(lhs)))

    def test_output_size_out_of_range(self):
        with self.assertRaises(ShapeMismatchError):
            K.conv_transpose3d(np.ones((1, 1, 2, 2, 2)), np.ones((1, 1, 1, 1, 1)), None, ConvSpec(1, 1, 1), output_size=(3, 2, 2))


class Conv2dTests(SimpleTestCase):
    def test_unit_kernel_adds_bias(self):
        x = np.random.default_rng(0).standard_normal((2, 1, 5, 5))
        out = K.conv2d(x, np.ones((2, 1, 1, 1)), np.array([0.5, -1.0]), ConvSpec.planar(1, 2, 1))
        npt.assert_allclose(out[:, 0], x[:, 0] + 0.5, atol=0)
        npt.assert_allclose(out[:, 1], x[:, 0] - 1.0, atol=0)

    def test_seven_by_seven_delta_is_identity(self):
        x = np.random.default_rng(1).standard_normal((1, 3, 9, 9))
        w = np.zeros((3, 3, 7, 7))
        for c in range(3):
            w[c, c, 3, 3] = 1.0
        npt.assert_array_equal(K.conv2d(x, w, None, ConvSpec.planar(3, 3, 7, 1, 3)), x)


class GradientTests(SimpleTestCase):
    """Analytic gradients against central differences (h = 1e-5, float64)"""

    def setUp(self):
        self.rng = np.random.default_rng(3)

    def assert_gradient(self, fn, array, analytic):
        numeric = numeric_gradient(fn, array).reshape(array.shape)
        npt.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)
        self.assertLessEqual(max_relative_error(analytic, numeric, floor=1e-3), 1e-5)

    def test_conv3d_backward_trivial_cases(self):
        x = self.rng.standard_normal((1, 1, 2, 3, 3))
        spec = ConvSpec(1, 1, 1)
        w = np.full((1, 1, 1, 1, 1), 1.5)
        gi, gw, gb = K.conv3d_backward(np.zeros_like(x), x, w, spec)
        for g in (gi, gw, gb):
            self.assertFalse(np.any(g))
        G = self.rng.standard_normal(x.shape)
        gi, gw, gb = K.conv3d_backward(G, x, w, spec)
        npt.assert_allclose(gw.ravel()[0], np.sum(x * G), rtol=1e-12)
        npt.assert_allclose(gi, 1.5 * G, rtol=1e-12)
        npt.assert_allclose(gb[0], G.sum(), rtol=1e-12)

    def test_conv3d_backward(self):
        spec = ConvSpec(2, 3, (2, 3, 3), (1, 2, 1), (1, 1, 0))
        x = self.rng.standard_normal((2, 2, 3, 5, 4))
        w = self.rng.standard_normal((3, 2, 2, 3, 3))
        b = self.rng.standard_normal(3)
        proj = self.rng.standard_normal((2, 3) + spec.output_extents(x.shape[2:]))
        loss = lambda: float(np.sum(K.conv3d(x, w, b, spec) * proj))
        gi, gw, gb = K.conv3d_backward(proj, x, w, spec)
        self.assert_gradient(loss, x, gi)
        self.assert_gradient(loss, w, gw)
        self.assert_gradient(loss, b, gb)

    def test_conv_transpose3d_backward(self):
        spec = ConvSpec(3, 2, (3, 4, 4), (1, 2, 2), (1, 1, 1))
        x = self.rng.standard_normal((1, 3, 2, 3, 3))
        w = self.rng.standard_normal((3, 2, 3, 4, 4))
        b = self.rng.standard_normal(2)
        proj = self.rng.standard_normal((1, 2) + spec.transposed_extents(x.shape[2:]))
        loss = lambda: float(np.sum(K.conv_transpose3d(x, w, b, spec) * proj))
        gi, gw, gb = K.conv_transpose3d_backward(proj, x, w, spec)
        self.assert_gradient(loss, x, gi)
        self.assert_gradient(loss, w, gw)
        self.assert_gradient(loss, b, gb)

    def test_conv2d_backward(self):
        spec = ConvSpec.planar(2, 2, 3, 2, 1)
        x = self.rng.standard_normal((2, 2, 5, 5))
        w = self.rng.standard_normal((2, 2, 3, 3))
        b = self.rng.standard_normal(2)
        proj = self.rng.standard_normal(K.conv2d(x, w, b, spec).shape)
        loss = lambda: float(np.sum(K.conv2d(x, w, b, spec) * proj))
        gi, gw, gb = K.conv2d_backward(proj, x, w, spec)
        self.assert_gradient(loss, x, gi)
        self.assert_gradient(loss, w, gw)
        self.assert_gradient(loss, b, gb)

    def test_relu(self):
        npt.assert_array_equal(K.relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])
        npt.assert_array_equal(K.relu(-np.ones(4)), np.zeros(4))
        x = self.rng.standard_normal(20)
        x[np.abs(x) < 1e-3] = 0.5
        proj = self.rng.standard_normal(20)
        self.assert_gradient(lambda: float(np.sum(K.relu(x) * proj)), x, K.relu_backward(proj, x))

    def test_sigmoid(self):
        self.assertEqual(K.sigmoid(np.array([0.0]))[0], 0.5)
        x = np.linspace(-700, 700, 41)
        y = K.sigmoid(x)
        self.assertTrue(np.all(np.isfinite(y)))
        npt.assert_allclose(y + K.sigmoid(-x), np.ones_like(x), atol=1e-12)
        x = self.rng.standard_normal(10) * 3
        proj = self.rng.standard_normal(10)
        self.assert_gradient(lambda: float(np.sum(K.sigmoid(x) * proj)), x, K.sigmoid_backward(proj, K.sigmoid(x)))

    def test_global_avg_pool(self):
        npt.assert_array_equal(K.global_avg_pool(np.full((2, 3, 2, 2, 2), 0.25)), np.full((2, 3), 0.25))
        x = self.rng.standard_normal((2, 3, 1, 1, 1))
        npt.assert_array_equal(K.global_avg_pool(x), x[:, :, 0, 0, 0])
        x = self.rng.standard_normal((2, 3, 2, 4, 3))
        self.assertLessEqual(np.abs(K.global_avg_pool(x) - global_avg_pool_naive(x)).max(), 1e-12)
        proj = self.rng.standard_normal((2, 3))
        self.assert_gradient(
            lambda: float(np.sum(K.global_avg_pool(x) * proj)), x, K.global_avg_pool_backward(proj, x.shape)
        )


class RelocationTests(SimpleTestCase):
    def test_concat_reshape_flip(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((1, 2, 4, 4, 4))
        b = rng.standard_normal((1, 2, 4, 4, 4))
        joined = K.concat([a, b], axis=1)
        self.assertEqual(joined.shape, (1, 4, 4, 4, 4))
        left, right = K.split(joined, [2, 2], axis=1)
        npt.assert_array_equal(left, a)
        npt.assert_array_equal(right, b)

        x = rng.standard_normal((1, 8, 2, 4, 4))
        y = K.reshape(x, (1, 16, 4, 4))
        npt.assert_array_equal(y.ravel(), x.ravel())
        with self.assertRaises(ShapeMismatchError):
            K.reshape(x, (1, 16, 4, 3))

        npt.assert_array_equal(K.flip(K.flip(x, 2), 2), x)

    def test_concat_extent_mismatch(self):
        with self.assertRaises(ShapeMismatchError) as ctx:
            K.concat([np.ones((1, 2, 3)), np.ones((1, 2, 4))], axis=1)
        self.assertEqual(ctx.exception.axis, 2)


class TensorFileTests(SimpleTestCase):
    def test_write_then_read(self):
        x = np.random.default_rng(8).standard_normal((2, 3, 4)).astype(np.float32)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "x.ftsr"
            write_tensor(path, x)
            raw = path.read_bytes()
            self.assertEqual(raw[:4], b"FTSR")
            self.assertEqual(raw[8], 0)
            y = read_tensor(path)
        self.assertEqual(y.dtype, np.float32)
        npt.assert_array_equal(x, y)

    def test_bad_magic_and_truncation(self):
        buffer = tensor_to_bytes(np.ones((2, 2)))
        with self.assertRaises(TensorFileError):
            tensor_from_bytes(b"XXXX" + buffer[4:])
        with self.assertRaises(TensorFileError):
            tensor_from_bytes(buffer[:-3])
