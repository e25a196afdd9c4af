import csv
import tempfile
import unittest
from pathlib import Path

import numpy as np
import numpy.testing as npt
from django.conf import settings
from django.test import SimpleTestCase

from FLAVR.exceptions import FlavrProcessingError
from vfi_data.exceptions import EmptyDatasetError
from vfi_data.services.dataset import ClipDataset
from vfi_data.services.models import FrameSequence
from vfi_data.services.sampling import collate, denormalize
from vfi_data.services.synth import synth_motion
from vfi_metrics.services.evaluation import evaluate
from vfi_metrics.services.quality import psnr, psnr_from_mse
from vfi_net.services.models import FlavrConfig
from vfi_net.services.network import build
from vfi_tensor.services.gradcheck import max_relative_error, numeric_gradient

from .exceptions import (
    BadMagicError,
    LossShapeError,
    OptimizerStateError,
    ParameterNameMismatchError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from .services.ablation import context_ablation
from .services.checkpoint import (
    checkpoint_from_bytes,
    checkpoint_from_network,
    checkpoint_to_bytes,
    load_checkpoint,
    network_from_checkpoint,
    save_checkpoint,
)
from .services.losses import loss
from .services.models import TrainConfig
from .services.optimizer import Adam, AdamState, adam_step
from .services.trainer import PlateauSchedule, fit


def random_clips(count, n_frames, size=16, seed=0):
    rng = np.random.default_rng(seed)
    return [FrameSequence(rng.uniform(size=(n_frames, size, size, 3)).astype(np.float32)) for _ in range(count)]


def naive_loss(preds, targets, mode):
    total = 0.0
    for pred, target in zip(preds, targets):
        values = []
        for p, t in zip(pred.ravel(), target.ravel()):
            d = p - t
            if mode == "l1":
                values.append(abs(d))
            elif mode == "l2":
                values.append(d * d)
            else:
                values.append(0.5 * d * d if abs(d) <= 1 else abs(d) - 0.5)
        total += sum(values) / len(values)
    return total


class LossTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(4)
        self.preds = [self.rng.standard_normal((2, 3, 4, 4)) for _ in range(3)]
        self.targets = [self.rng.uniform(size=(2, 3, 4, 4)) for _ in range(3)]

    def test_identical_frames(self):
        for mode in ("l1", "l2", "huber", "l1+perceptual"):
            value, grads = loss(self.targets, self.targets, mode)
            self.assertEqual(value, 0.0)
            self.assertTrue(all(not np.any(g) for g in grads))

    def test_single_pixel(self):
        value, grads = loss([np.full((1, 3, 1, 1), 0.5)], [np.zeros((1, 3, 1, 1))], "l1")
        self.assertEqual(value, 0.5)
        npt.assert_array_equal(grads[0], np.full((1, 3, 1, 1), 1.0 / 3.0))

    def test_matches_naive_loop(self):
        for mode in ("l1", "l2", "huber"):
            with self.subTest(mode=mode):
                value, _ = loss(self.preds, self.targets, mode)
                self.assertLessEqual(abs(value - naive_loss(self.preds, self.targets, mode)), 1e-12)

    def test_gradients_match_finite_differences(self):
        for mode in ("l1", "l2", "huber"):
            with self.subTest(mode=mode):
                _, grads = loss(self.preds, self.targets, mode)
                for pred, grad in zip(self.preds, grads):
                    numeric = numeric_gradient(lambda: loss(self.preds, self.targets, mode)[0], pred)
                    self.assertLessEqual(max_relative_error(grad.ravel(), numeric, floor=1e-3), 1e-6)

    def test_symmetric_modes(self):
        for mode in ("l1", "l2"):
            self.assertAlmostEqual(loss(self.preds, self.targets, mode)[0], loss(self.targets, self.preds, mode)[0], places=12)

    def test_feature_loss_hook(self):
        def feature_loss(preds, targets):
            return 2.0, [np.ones_like(p) for p in preds]

        l1, l1_grads = loss(self.preds, self.targets, "l1")
        stub, stub_grads = loss(self.preds, self.targets, "l1+perceptual")
        hooked, hooked_grads = loss(self.preds, self.targets, "l1+perceptual", feature_loss)
        self.assertEqual(stub, l1)
        self.assertAlmostEqual(hooked, l1 + 2.0, places=12)
        npt.assert_array_equal(stub_grads[0], l1_grads[0])
        npt.assert_allclose(hooked_grads[0], l1_grads[0] + 1.0)

    def test_mismatches(self):
        with self.assertRaises(LossShapeError):
            loss(self.preds, self.targets[:2])
        with self.assertRaises(LossShapeError):
            loss([np.zeros((1, 3, 4, 4))], [np.zeros((1, 3, 4, 5))])


class AdamTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(8)

    def test_zero_gradient_leaves_parameters(self):
        params = {"w": self.rng.standard_normal((3, 4))}
        before = params["w"].copy()
        state = AdamState()
        for _ in range(5):
            adam_step(params, {"w": np.zeros((3, 4))}, state, lr=1e-3)
        npt.assert_array_equal(params["w"], before)
        self.assertEqual(state.step, 5)

    def test_first_step(self):
        params = {"w": np.zeros(4)}
        grad = np.array([0.5, -2.0, 1e-3, 3.0])
        adam_step(params, {"w": grad}, AdamState(), lr=0.01)
        npt.assert_allclose(params["w"], -0.01 * grad / (np.abs(grad) + 1e-8), rtol=1e-12)

    def test_matches_recurrence(self):
        value = self.rng.standard_normal(5)
        grads = [self.rng.standard_normal(5) for _ in range(3)]
        params, state = {"w": value.copy()}, AdamState()
        expected, m, v = value.copy(), np.zeros(5), np.zeros(5)
        for t, g in enumerate(grads, start=1):
            adam_step(params, {"w": g}, state, lr=2e-4)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            expected = expected - 2e-4 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        npt.assert_allclose(params["w"], expected, rtol=1e-12, atol=1e-15)

    def test_shape_mismatch(self):
        with self.assertRaises(OptimizerStateError):
            adam_step({"w": np.zeros(3)}, {"w": np.zeros(4)}, AdamState(), lr=1e-3)
        state = AdamState(m={"w": np.zeros(2)}, v={"w": np.zeros(2)})
        with self.assertRaises(OptimizerStateError):
            adam_step({"w": np.zeros(3)}, {"w": np.zeros(3)}, state, lr=1e-3)


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        self.net = build(FlavrConfig.tiny(k=4, context=1), seed=3)
        self.optimizer = Adam(self.net.parameters())
        self.x = np.random.default_rng(0).standard_normal((1, 3, 2, 16, 16)).astype(np.float32)
        self.net.forward(self.x)
        self.net.backward([np.ones((1, 3, 16, 16), dtype=np.float32)] * 3)
        self.optimizer.step(1e-3)
        self.ckpt = checkpoint_from_network(self.net, epoch=3, best_val_psnr=27.25, optimizer=self.optimizer)

    def test_round_trip_is_byte_identical(self):
        data = checkpoint_to_bytes(self.ckpt)
        loaded = checkpoint_from_bytes(data)
        self.assertEqual(checkpoint_to_bytes(loaded), data)
        self.assertEqual(loaded.epoch, 3)
        self.assertEqual(loaded.optimizer_step, 1)
        self.assertEqual(loaded.best_val_psnr, 27.25)
        self.assertEqual(loaded.config, self.net.config)

    def test_restored_network_forward_is_bitwise_equal(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / "model.flvr", self.ckpt)
            restored = network_from_checkpoint(load_checkpoint(path, self.net.config))
        for a, b in zip(self.net.forward(self.x), restored.forward(self.x)):
            self.assertEqual(a.tobytes(), b.tobytes())

    def test_optimizer_state_restores(self):
        loaded = checkpoint_from_bytes(checkpoint_to_bytes(self.ckpt))
        optimizer = Adam(self.net.parameters())
        optimizer.load_state_tensors(loaded.moments, loaded.optimizer_step)
        self.assertEqual(optimizer.state.step, 1)
        for name, m in self.optimizer.state.m.items():
            npt.assert_array_equal(optimizer.state.m[name], m)

    def test_bad_magic(self):
        data = checkpoint_to_bytes(self.ckpt)
        with self.assertRaises(BadMagicError):
            checkpoint_from_bytes(b"FTSR" + data[4:])

    def test_version_mismatch(self):
        data = checkpoint_to_bytes(self.ckpt)
        with self.assertRaises(VersionMismatchError):
            checkpoint_from_bytes(data[:4] + (2).to_bytes(4, "little") + data[8:])

    def test_truncated(self):
        data = checkpoint_to_bytes(self.ckpt)
        for cut in (6, 20, len(data) // 2, len(data) - 1):
            with self.subTest(cut=cut), self.assertRaises(TruncatedCheckpointError):
                checkpoint_from_bytes(data[:cut])

    def test_name_mismatch_lists_offenders(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / "model.flvr", self.ckpt)
            with self.assertRaises(ParameterNameMismatchError) as ctx:
                load_checkpoint(path, FlavrConfig.tiny(k=4, context=1, gating_enabled=False))
        self.assertIn("gate.enc.stem.W", ctx.exception.unexpected)
        self.assertEqual(ctx.exception.missing, [])


class PlateauScheduleTests(SimpleTestCase):
    def test_improving_scores_keep_lr(self):
        schedule = PlateauSchedule(2e-4, patience=2)
        lrs = [schedule.step(20.0 + 0.5 * epoch) for epoch in range(10)]
        self.assertEqual(lrs, [2e-4] * 10)

    def test_flat_scores_halve_every_patience_epochs(self):
        schedule = PlateauSchedule(1.0, patience=2)
        lrs = [schedule.step(20.0) for _ in range(6)]
        self.assertEqual(lrs, [1.0, 1.0, 0.5, 0.5, 0.25, 0.25])

    def test_gain_below_threshold_is_a_plateau(self):
        schedule = PlateauSchedule(1.0, patience=1, threshold=1e-3)
        schedule.step(20.0)
        self.assertEqual(schedule.step(20.0005), 0.5)

    def test_slow_error_decline_is_progress_in_db(self):
        schedule = PlateauSchedule(2e-4, patience=5, threshold=1e-3)
        lrs = [schedule.step(psnr_from_mse(0.0025 * 0.99 ** epoch)) for epoch in range(40)]
        self.assertEqual(lrs, [2e-4] * 40)


class FitTests(SimpleTestCase):
    def setUp(self):
        self.config = FlavrConfig.tiny(k=2, context=1)

    def test_full_batch_epoch_equals_one_adam_step(self):
        dataset = ClipDataset(random_clips(1, 4), k=2, context=1)
        self.assertEqual(len(dataset), 2)
        tcfg = TrainConfig(batch_size=2, max_epochs=1, augment=False, shuffle=False)
        trained = build(self.config, seed=1)
        fit(trained, dataset, None, tcfg)

        manual = build(self.config, seed=1)
        inputs, targets, means = collate([dataset.prepare(0), dataset.prepare(1)])
        preds = [denormalize(p, means, channel_axis=1) for p in manual.forward(inputs)]
        _, grads = loss(preds, targets, "l1")
        manual.backward(grads)
        Adam(manual.parameters()).step(tcfg.lr0)

        for (name, a), (_, b) in zip(trained.parameters(), manual.parameters()):
            self.assertEqual(a.value.tobytes(), b.value.tobytes(), name)

    def test_writes_checkpoints_and_log(self):
        train = ClipDataset(random_clips(2, 5), k=2, context=1)
        val = ClipDataset(random_clips(1, 5, seed=1), k=2, context=1)
        tcfg = TrainConfig(batch_size=2, max_epochs=2)
        with tempfile.TemporaryDirectory() as tmp:
            log = fit(build(self.config, seed=0), train, val, tcfg, tmp)
            self.assertTrue((Path(tmp) / "best.flvr").is_file())
            self.assertTrue((Path(tmp) / "last.flvr").is_file())
            with open(Path(tmp) / "train_log.csv", newline="") as fh:
                rows = list(csv.DictReader(fh))
            last = load_checkpoint(Path(tmp) / "last.flvr", self.config)
        self.assertEqual(list(rows[0]), ["epoch", "train_loss", "val_psnr", "lr"])
        self.assertEqual(len(rows), 2)
        self.assertEqual(last.epoch, 2)
        self.assertEqual(last.best_val_psnr, log.best_val_psnr)
        self.assertEqual(log.steps, 2 * 3)

    def test_deterministic_across_worker_counts(self):
        dataset = ClipDataset(random_clips(2, 6), k=2, context=1)
        runs = []
        for workers in (1, 3):
            net = build(self.config, seed=2)
            tcfg = TrainConfig(batch_size=3, max_epochs=2, crop_size=8, workers=workers, seed=9)
            log = fit(net, dataset, None, tcfg)
            runs.append((log.to_frame(), net.parameter_table()))
        self.assertEqual(runs[0][0]["train_loss"].tolist(), runs[1][0]["train_loss"].tolist())
        for name, pair in runs[0][1].items():
            self.assertEqual(pair.value.tobytes(), runs[1][1][name].value.tobytes())

    def test_schedule_follows_training_psnr_without_validation(self):
        dataset = ClipDataset(random_clips(2, 6), k=2, context=1)
        tcfg = TrainConfig(batch_size=5, max_epochs=6, plateau_patience=1, plateau_threshold=0.5, seed=3)
        log = fit(build(self.config, seed=0), dataset, None, tcfg)

        replay = PlateauSchedule(tcfg.lr0, tcfg.plateau_patience, tcfg.plateau_threshold)
        expected = [tcfg.lr0] + [replay.step(record.train_psnr) for record in log.records[:-1]]
        self.assertEqual(log.lr_trace(), expected)
        for record in log.records:
            self.assertGreater(record.train_psnr, 0.0)
            self.assertLess(record.train_psnr, 99.0)

    def test_step_budget(self):
        dataset = ClipDataset(random_clips(2, 6), k=2, context=1)
        log = fit(build(self.config, seed=0), dataset, None, TrainConfig(batch_size=1, max_epochs=5, max_steps=3))
        self.assertEqual(log.steps, 3)
        self.assertEqual(len(log.records), 1)

    def test_empty_training_set(self):
        with self.assertRaises(EmptyDatasetError):
            fit(build(self.config, seed=0), ClipDataset(random_clips(1, 2), k=2, context=1), None, TrainConfig())

    def test_shape_errors_carry_context(self):
        dataset = ClipDataset(random_clips(1, 3, size=12), k=2, context=1)
        with self.assertRaises(FlavrProcessingError) as ctx:
            fit(build(self.config, seed=0), dataset, None, TrainConfig(max_epochs=1))
        self.assertIn("epoch 1", ctx.exception.message)


class AblationSwitchTests(SimpleTestCase):
    def test_variants_train_one_step(self):
        clips = random_clips(1, 7)
        for overrides in (
            {"fusion_mode": "none"},
            {"fusion_mode": "add"},
            {"fusion_mode": "concat"},
            {"gating_enabled": False},
            {"temporal_stride": "1,2,1,1,1"},
        ):
            with self.subTest(**overrides):
                config = FlavrConfig.tiny(k=2, context=2, **overrides)
                net = build(config, seed=0)
                before = {name: pair.value.copy() for name, pair in net.parameters()}
                fit(net, ClipDataset(clips, k=2, context=2), None, TrainConfig(max_steps=1, augment=False))
                changed = [name for name, pair in net.parameters() if not np.array_equal(pair.value, before[name])]
                self.assertIn("head.pred.weight", changed)
                out = net.forward(np.zeros((1, 3, 4, 16, 16), dtype=np.float32))
                self.assertEqual(out[0].shape, (1, 3, 16, 16))

    def test_context_ablation_table(self):
        table = context_ablation(
            random_clips(2, 9), random_clips(1, 9, seed=1), [1, 2],
            FlavrConfig.tiny(k=2), TrainConfig(max_steps=1, augment=False),
        )
        self.assertEqual(list(table["context"]), [1, 2])
        self.assertEqual(list(table["input_frames"]), [2, 4])
        self.assertEqual(list(table["train_windows"]), [2 * 7, 2 * 3])


def translate_clips(count, n_frames, size, seed):
    rng = np.random.default_rng(seed)
    clips = []
    for index in range(count):
        velocity = (int(rng.integers(-2, 3)), int(rng.integers(-1, 2)))
        clips.append(synth_motion("translate", velocity, n_frames, size, size, seed=seed + index))
    return clips


@unittest.skipUnless(settings.FLAVR_RUN_SLOW, "set FLAVR_RUN_SLOW=1 to run training experiments")
class TrainingExperimentTests(SimpleTestCase):
    def test_overfits_translating_squares(self):
        dataset = ClipDataset(translate_clips(8, 8, 32, seed=11), k=2, context=2)
        net = build(FlavrConfig.tiny(k=2, context=2), seed=0)
        fit(net, dataset, None, TrainConfig(batch_size=4, max_epochs=10_000, max_steps=2000, augment=False))
        self.assertGreater(evaluate(net, dataset, batch_size=4).psnr, 30.0)

    def test_beats_frame_averaging_on_sine_motion(self):
        clips = [synth_motion("sine", (0, 0), 24, 32, 32, seed=s, amplitude=6, period=12) for s in range(4)]
        dataset = ClipDataset(clips, k=2, context=2)
        net = build(FlavrConfig.tiny(k=2, context=2), seed=0)
        fit(net, dataset, None, TrainConfig(batch_size=4, max_epochs=10_000, max_steps=2000, augment=False))

        baseline = []
        for i in range(len(dataset)):
            sample = dataset[i]
            average = (sample.inputs[1] + sample.inputs[2]) / 2.0
            baseline.append(psnr(average.transpose(2, 0, 1), sample.targets[0].transpose(2, 0, 1)))
        self.assertGreaterEqual(evaluate(net, dataset, batch_size=4).psnr, float(np.mean(baseline)) + 3.0)
