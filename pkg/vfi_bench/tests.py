import csv
import json
import statistics
import tempfile
import unittest
from pathlib import Path

import numpy as np
import numpy.testing as npt
from django.conf import settings
from django.test import SimpleTestCase

from vfi_net.exceptions import InputShapeError
from vfi_net.services.models import FlavrConfig
from vfi_net.services.network import build

from .exceptions import BenchProtocolError, RecursiveBaselineError
from .services.models import BenchConfig, BenchReport
from .services.timing import recursive_interpolate, scaling_study, time_forward


class TimeForwardTests(SimpleTestCase):
    def setUp(self):
        self.net = build(FlavrConfig.tiny(k=4, context=1), seed=0)

    def test_report_fields(self):
        report = time_forward(self.net, 16, 16, warmup=1, runs=3)
        self.assertEqual(report.runs, 3)
        self.assertEqual(report.forward_calls, 1)
        self.assertEqual(report.mean, statistics.fmean(report.times))
        self.assertAlmostEqual(report.frames_per_second, 3 / report.mean)
        self.assertFalse(report.protocol_compliant)
        self.assertEqual(self.net.forward_calls, 4)

    def test_warmup_only_changes_excluded_runs(self):
        cold = time_forward(self.net, 16, 16, warmup=0, runs=2)
        warm = time_forward(self.net, 16, 16, warmup=5, runs=2)
        self.assertEqual((cold.runs, cold.warmup), (2, 0))
        self.assertEqual((warm.runs, warm.warmup), (2, 5))
        self.assertEqual(self.net.forward_calls, 9)

    def test_shape_errors_surface_before_timing(self):
        with self.assertRaises(InputShapeError):
            time_forward(self.net, 12, 16, runs=1)
        self.assertEqual(self.net.forward_calls, 0)

    def test_protocol_errors(self):
        with self.assertRaises(BenchProtocolError):
            time_forward(self.net, 16, 16, runs=0)
        with self.assertRaises(BenchProtocolError):
            BenchConfig.from_mapping({"bench_ks": "1,2"})

    def test_serialization(self):
        report = BenchReport(
            k=2, context=2, height=8, width=8, widths=(4, 4, 8, 8, 8), dtype="float32",
            warmup=0, workers=2, forward_calls=1, times=[0.01] * 20,
        )
        data = json.loads(report.to_json())
        self.assertTrue(data["protocol_compliant"])
        self.assertEqual(data["workers"], 2)
        self.assertEqual(data["runs"], 20)
        with tempfile.TemporaryDirectory() as tmp:
            with open(report.write_csv(Path(tmp) / "runs.csv"), newline="") as fh:
                self.assertEqual(len(list(csv.DictReader(fh))), 20)


class RecursiveTests(SimpleTestCase):
    def setUp(self):
        self.net = build(FlavrConfig.tiny(k=2, context=1), seed=4)
        self.x = np.random.default_rng(0).standard_normal((1, 3, 2, 16, 16)).astype(np.float32)

    def test_factor_two_is_one_forward_pass(self):
        expected = self.net.forward(self.x)[0]
        frames = recursive_interpolate(self.net, self.x, 2)
        self.assertEqual(len(frames), 1)
        npt.assert_array_equal(frames[0], expected)

    def test_one_batched_pass_per_round(self):
        before = self.net.forward_calls
        frames = recursive_interpolate(self.net, self.x, 8)
        self.assertEqual(self.net.forward_calls - before, 3)
        self.assertEqual(len(frames), 7)
        self.assertTrue(all(f.shape == (1, 3, 16, 16) for f in frames))

    def test_unavailable_factors(self):
        with self.assertRaises(RecursiveBaselineError):
            recursive_interpolate(self.net, self.x, 6)
        with self.assertRaises(RecursiveBaselineError):
            recursive_interpolate(build(FlavrConfig.tiny(k=4, context=1), seed=0), self.x, 4)


class ScalingStudyTests(SimpleTestCase):
    def test_table(self):
        study = scaling_study(FlavrConfig.tiny(context=1), [3, 4], 16, 16, warmup=0, runs=2)
        self.assertEqual([row.k for row in study.rows], [2, 3, 4])
        self.assertEqual(study.ratio(2), 1.0)
        self.assertIsNone(study.rows[1].recursive_time)
        self.assertIsNotNone(study.rows[2].recursive_time)
        self.assertTrue(all(r.forward_calls == 1 for r in study.reports if r.mode == "single-shot"))
        with tempfile.TemporaryDirectory() as tmp:
            with open(study.write_csv(Path(tmp) / "scaling.csv"), newline="") as fh:
                self.assertEqual(len(list(csv.DictReader(fh))), 3)


@unittest.skipUnless(settings.FLAVR_RUN_SLOW, "set FLAVR_RUN_SLOW=1 to run timing experiments")
class SingleShotScalingTests(SimpleTestCase):
    def test_near_flat_scaling(self):
        study = scaling_study(FlavrConfig.bench(), [2, 8], 256, 256, warmup=3, runs=20)
        self.assertLessEqual(study.ratio(8), 1.6)
        self.assertGreaterEqual(study.rows[-1].recursive_ratio, 2.5)

    def test_timing_is_stable(self):
        report = time_forward(build(FlavrConfig.bench(), seed=0), 256, 256, warmup=3, runs=20)
        self.assertTrue(report.protocol_compliant)
        self.assertLess(report.stddev / report.mean, 0.25)
