import csv
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from vfi_data.exceptions import EmptyDatasetError
from vfi_data.services.dataset import ClipDataset
from vfi_data.services.models import FrameSequence
from vfi_net.services.models import FlavrConfig
from vfi_net.services.network import build

from .exceptions import MetricShapeError, WindowTooLargeError
from .services.evaluation import evaluate
from .services.quality import (
    PSNR_CAP,
    SSIM_K1,
    SSIM_K2,
    SSIM_SIGMA,
    SSIM_WINDOW,
    gaussian_window,
    psnr,
    psnr_from_mse,
    ssim,
)


def naive_ssim(x, y):
    """Window-by-window SSIM of one plane"""
    window = gaussian_window()
    size = window.shape[0]
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    values = []
    for i in range(x.shape[0] - size + 1):
        for j in range(x.shape[1] - size + 1):
            px, py = x[i:i + size, j:j + size], y[i:i + size, j:j + size]
            mx, my = np.sum(window * px), np.sum(window * py)
            vx = np.sum(window * (px - mx) ** 2)
            vy = np.sum(window * (py - my) ** 2)
            cov = np.sum(window * (px - mx) * (py - my))
            values.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
    return float(np.mean(values))


def zero_network(k=2, context=1):
    net = build(FlavrConfig.tiny(k=k, context=context), seed=0)
    for _, pair in net.parameters():
        pair.value[...] = 0
    return net


def constant_clip(values, size=16):
    values = np.asarray(values, dtype=np.float32)
    return FrameSequence(np.broadcast_to(values[:, None, None, None], (len(values), size, size, 3)))


class PsnrTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_identical_images_hit_the_cap(self):
        image = self.rng.uniform(size=(3, 8, 8))
        self.assertEqual(psnr(image, image), PSNR_CAP)

    def test_uniform_offset(self):
        gt = np.full((3, 8, 8), 0.5)
        self.assertAlmostEqual(psnr(gt + 0.1, gt), 20.0, places=9)

    def test_from_mse(self):
        self.assertAlmostEqual(psnr_from_mse(0.01), 20.0, places=9)
        self.assertEqual(psnr_from_mse(0.0), PSNR_CAP)

    def test_matches_naive_mse(self):
        pred = self.rng.uniform(size=(3, 8, 8))
        gt = self.rng.uniform(size=(3, 8, 8))
        mse = sum((p - g) ** 2 for p, g in zip(pred.ravel(), gt.ravel())) / pred.size
        self.assertAlmostEqual(psnr(pred, gt), 10 * np.log10(1 / mse), places=9)

    def test_larger_error_lowers_psnr(self):
        gt = self.rng.uniform(0.2, 0.8, size=(3, 8, 8))
        noise = self.rng.standard_normal(gt.shape) * 0.05
        self.assertGreater(psnr(gt + noise, gt), psnr(gt + 2 * noise, gt))

    def test_prediction_is_clamped(self):
        gt = np.ones((3, 4, 4))
        self.assertEqual(psnr(gt + 5.0, gt), PSNR_CAP)

    def test_shape_mismatch(self):
        with self.assertRaises(MetricShapeError):
            psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


class SsimTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(1)
        self.x = self.rng.uniform(size=(3, 32, 32))
        self.y = np.clip(self.x + self.rng.standard_normal(self.x.shape) * 0.1, 0, 1)

    def test_window_constants(self):
        self.assertEqual((SSIM_WINDOW, SSIM_SIGMA, SSIM_K1, SSIM_K2), (11, 1.5, 0.01, 0.03))
        window = gaussian_window()
        self.assertEqual(window.shape, (11, 11))
        self.assertAlmostEqual(float(window.sum()), 1.0, places=12)
        self.assertAlmostEqual(float(window[5, 6] / window[5, 5]), float(np.exp(-1.0 / (2 * 1.5 ** 2))), places=12)

    def test_self_similarity_is_one(self):
        self.assertAlmostEqual(ssim(self.x, self.x), 1.0, places=12)

    def test_symmetric(self):
        self.assertAlmostEqual(ssim(self.x, self.y), ssim(self.y, self.x), places=12)

    def test_bounded(self):
        value = ssim(self.x, self.y)
        self.assertGreater(value, -1.0)
        self.assertLess(value, 1.0)

    def test_anti_correlated_images(self):
        checker = (np.indices((32, 32)).sum(axis=0) % 2).astype(np.float64)
        self.assertLess(ssim(checker, 1.0 - checker), 0.0)

    def test_matches_naive_windows(self):
        expected = np.mean([naive_ssim(p, g) for p, g in zip(self.y, self.x)])
        self.assertLessEqual(abs(ssim(self.y, self.x) - expected), 1e-10)

    def test_window_too_large(self):
        with self.assertRaises(WindowTooLargeError):
            ssim(np.zeros((3, 10, 32)), np.zeros((3, 10, 32)))


class EvaluateTests(SimpleTestCase):
    def test_exact_predictions(self):
        dataset = ClipDataset([constant_clip([0.4] * 5)], k=2, context=1)
        report = evaluate(zero_network(), dataset)
        self.assertEqual(report.psnr, PSNR_CAP)
        self.assertAlmostEqual(report.ssim, 1.0, places=9)

    def test_known_error(self):
        dataset = ClipDataset([constant_clip([0.0, 0.5, 0.0])], k=2, context=1)
        report = evaluate(zero_network(), dataset)
        self.assertAlmostEqual(report.psnr, 10 * np.log10(4.0), places=5)

    def test_aggregate_is_mean_of_windows(self):
        rng = np.random.default_rng(2)
        clip = FrameSequence(rng.uniform(size=(9, 16, 16, 3)).astype(np.float32))
        report = evaluate(build(FlavrConfig.tiny(k=4), seed=3), ClipDataset([clip], k=4, context=1))
        self.assertEqual(len(report.rows), len(report.per_clip()) * 3)
        self.assertEqual(len(report.per_clip()), 5)
        self.assertAlmostEqual(report.psnr, float(report.per_clip()["psnr"].mean()), places=12)
        self.assertEqual(list(report.per_offset().index), [1, 2, 3])

    def test_view_mismatch(self):
        dataset = ClipDataset([constant_clip([0.4] * 9)], k=4, context=1)
        with self.assertRaises(MetricShapeError):
            evaluate(zero_network(k=2), dataset)

    def test_empty_dataset(self):
        dataset = ClipDataset([constant_clip([0.4] * 2)], k=2, context=1)
        with self.assertRaises(EmptyDatasetError):
            evaluate(zero_network(), dataset)

    def test_csv_layout(self):
        dataset = ClipDataset([constant_clip([0.4] * 5)], k=2, context=1, names=["clip_a"])
        report = evaluate(zero_network(), dataset)
        with tempfile.TemporaryDirectory() as tmp:
            path = report.write_csv(Path(tmp) / "eval.csv")
            with open(path, newline="") as fh:
                rows = list(csv.DictReader(fh))
        self.assertEqual(len(rows), len(dataset) + 1)
        self.assertEqual(rows[0]["clip"], "clip_a@0")
        self.assertEqual(rows[-1]["clip"], "mean")
        self.assertEqual(rows[-1]["offset"], "all")
