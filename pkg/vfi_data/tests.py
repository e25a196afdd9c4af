import tempfile
from pathlib import Path

import numpy as np
import numpy.testing as npt
from django.test import SimpleTestCase
from PIL import Image

from .exceptions import (
    EmptyDirectoryError,
    FrameDimensionError,
    SampleRangeError,
    SynthesisError,
    UnreadableFrameError,
)
from .services.dataset import ClipDataset
from .services.frame_io import load_frames, save_frames
from .services.models import FrameSequence, SampleSpec
from .services.sampling import (
    augment,
    collate,
    denormalize,
    enumerate_anchors,
    enumerate_gaps,
    enumerate_samples,
    materialize,
    normalize,
    random_crop,
)
from .services.synth import object_origins, synth_motion, write_synthetic_dataset


def indexed_sequence(n_frames, size=4):
    """Frame i is filled with the value i / n_frames, so frames identify themselves"""
    values = np.arange(n_frames, dtype=np.float32) / n_frames
    return FrameSequence(np.broadcast_to(values[:, None, None, None], (n_frames, size, size, 3)))


def frame_ids(frames, n_frames):
    return [int(round(float(f[0, 0, 0]) * n_frames)) for f in frames]


class SamplingTests(SimpleTestCase):
    def test_thirteen_frame_window(self):
        specs = enumerate_samples(indexed_sequence(13), k=4, context=2)
        self.assertEqual(len(specs), 1)
        # 0-based positions of frames A1, A5, A9, A13 and targets A6, A7, A8
        self.assertEqual(specs[0].input_indices, (0, 4, 8, 12))
        self.assertEqual(specs[0].target_indices, (5, 6, 7))

    def test_minimal_window(self):
        specs = enumerate_samples(indexed_sequence(3), k=2, context=1)
        self.assertEqual([(s.input_indices, s.target_indices) for s in specs], [((0, 2), (1,))])

    def test_count_matches_brute_force(self):
        n, k, context = 30, 2, 2
        brute = [
            p for p in range(n)
            if all(0 <= p + (j - context + 1) * k <= n - 1 for j in range(2 * context))
        ]
        self.assertEqual(enumerate_anchors(n, k, context), brute)

    def test_short_sequence_gives_no_windows(self):
        self.assertEqual(enumerate_samples(indexed_sequence(4), k=4, context=1), [])

    def test_random_windows_stay_in_range(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(2, 40))
            k = int(rng.integers(2, 9))
            context = int(rng.integers(1, 4))
            seq = indexed_sequence(n, size=1)
            for spec in enumerate_samples(seq, k, context):
                inputs = spec.input_indices
                self.assertTrue(all(0 <= i < n for i in inputs + spec.target_indices))
                left, right = inputs[context - 1], inputs[context]
                self.assertEqual(spec.target_indices, tuple(range(left + 1, right)))
                self.assertEqual(set(np.diff(inputs)), {k} if len(inputs) > 1 else set())
                sample = materialize(seq, spec)
                self.assertEqual(frame_ids(sample.inputs, n), list(inputs))

    def test_invalid_window(self):
        with self.assertRaises(SampleRangeError):
            materialize(indexed_sequence(5), SampleSpec(k=4, context=1, anchor=2))

    def test_gaps(self):
        self.assertEqual(enumerate_gaps(6, context=2), [1, 2, 3])
        self.assertEqual(enumerate_gaps(6, context=1), [0, 1, 2, 3, 4])


class AugmentTests(SimpleTestCase):
    def setUp(self):
        self.seq = indexed_sequence(13)
        self.sample = materialize(self.seq, enumerate_samples(self.seq, 4, 2)[0])

    def test_reverse_order(self):
        reversed_sample = augment(self.sample, reverse=True)
        self.assertEqual(frame_ids(reversed_sample.inputs, 13), [12, 8, 4, 0])
        self.assertEqual(frame_ids(reversed_sample.targets, 13), [7, 6, 5])

    def test_involutions_and_commutation(self):
        rng = np.random.default_rng(1)
        sample = self.sample.with_frames(
            rng.uniform(size=self.sample.inputs.shape).astype(np.float32),
            rng.uniform(size=self.sample.targets.shape).astype(np.float32),
        )
        for flags in ({"reverse": True}, {"hflip": True}):
            twice = augment(augment(sample, **flags), **flags)
            self.assertEqual(twice.inputs.tobytes(), sample.inputs.tobytes())
            self.assertEqual(twice.targets.tobytes(), sample.targets.tobytes())
        a = augment(augment(sample, reverse=True), hflip=True)
        b = augment(augment(sample, hflip=True), reverse=True)
        npt.assert_array_equal(a.inputs, b.inputs)
        npt.assert_array_equal(a.targets, b.targets)

    def test_hflip_matches_opposite_motion(self):
        left = synth_motion("translate", (-2, 0), 9, 32, 48, seed=3)
        right = synth_motion("translate", (2, 0), 9, 32, 48, seed=3)
        spec = enumerate_samples(left, 2, 2)[0]
        flipped = augment(materialize(left, spec), hflip=True)
        direct = materialize(right, spec)
        npt.assert_array_equal(flipped.inputs, direct.inputs)
        npt.assert_array_equal(flipped.targets, direct.targets)

    def test_random_crop(self):
        sample = materialize(synth_motion("translate", (1, 1), 9, 32, 40, seed=0), SampleSpec(2, 2, 3))
        cropped = random_crop(sample, 16, np.random.default_rng(0))
        self.assertEqual(cropped.inputs.shape, (4, 16, 16, 3))
        self.assertEqual(cropped.targets.shape, (1, 16, 16, 3))
        with self.assertRaises(SampleRangeError):
            random_crop(sample, 33, np.random.default_rng(0))


class NormalizeTests(SimpleTestCase):
    def test_constant_inputs(self):
        seq = FrameSequence(np.full((5, 4, 4, 3), 0.5, dtype=np.float32))
        sample, means = normalize(materialize(seq, SampleSpec(2, 1, 1)))
        npt.assert_array_equal(sample.inputs, np.zeros_like(sample.inputs))
        npt.assert_array_equal(means, [0.5, 0.5, 0.5])
        npt.assert_array_equal(sample.targets, np.full((1, 4, 4, 3), 0.5))

    def test_means_and_inverse(self):
        rng = np.random.default_rng(2)
        seq = FrameSequence(rng.uniform(size=(9, 5, 6, 3)))
        raw = materialize(seq, SampleSpec(2, 2, 3))
        sample, means = normalize(raw)
        naive = [
            sum(float(v) for v in raw.inputs[..., c].ravel()) / raw.inputs[..., c].size for c in range(3)
        ]
        self.assertLessEqual(np.abs(means - naive).max(), 1e-12)
        npt.assert_allclose(denormalize(sample.inputs, means), raw.inputs, atol=1e-6)

    def test_denormalize_batched_channel_first(self):
        frames = np.zeros((2, 3, 4, 4), dtype=np.float32)
        means = np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]])
        out = denormalize(frames, means, channel_axis=1)
        npt.assert_allclose(out[1, 2], np.full((4, 4), 0.6), rtol=1e-6)
        npt.assert_allclose(out[0, 0], np.full((4, 4), 0.1), rtol=1e-6)

    def test_collate(self):
        seq = synth_motion("translate", (1, 0), 12, 16, 24, seed=0)
        samples = [normalize(materialize(seq, spec))[0] for spec in enumerate_samples(seq, 4, 1)[:3]]
        inputs, targets, means = collate(samples)
        self.assertEqual(inputs.shape, (3, 3, 2, 16, 24))
        self.assertEqual(len(targets), 3)
        self.assertEqual(targets[0].shape, (3, 3, 16, 24))
        self.assertEqual(means.shape, (3, 3))
        npt.assert_array_equal(inputs[1, :, 0], samples[1].inputs[0].transpose(2, 0, 1))
        npt.assert_array_equal(targets[2][0], samples[0].targets[2].transpose(2, 0, 1))


class FrameIoTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_save_then_load(self):
        seq = FrameSequence(np.random.default_rng(0).uniform(size=(3, 6, 5, 3)), fps=24.0)
        save_frames(seq, self.root / "clip")
        self.assertEqual(sorted(p.name for p in (self.root / "clip").iterdir()),
                         ["000001.png", "000002.png", "000003.png", "meta.txt"])
        loaded = load_frames(self.root / "clip")
        self.assertEqual(loaded.frames.shape, (3, 6, 5, 3))
        self.assertEqual(loaded.fps, 24.0)
        self.assertLessEqual(np.abs(loaded.frames - seq.frames).max(), 1.0 / 255 + 1e-7)

    def test_empty_directory(self):
        (self.root / "empty").mkdir()
        with self.assertRaises(EmptyDirectoryError):
            load_frames(self.root / "empty")

    def test_mixed_resolution_names_file(self):
        clip = self.root / "mixed"
        clip.mkdir()
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(clip / "000001.png")
        Image.fromarray(np.zeros((4, 6, 3), dtype=np.uint8)).save(clip / "000002.png")
        with self.assertRaises(FrameDimensionError) as ctx:
            load_frames(clip)
        self.assertIn("000002.png", str(ctx.exception))

    def test_unreadable_frame(self):
        clip = self.root / "broken"
        clip.mkdir()
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(clip / "000001.png")
        (clip / "000002.png").write_bytes(b"not a png")
        with self.assertRaises(UnreadableFrameError):
            load_frames(clip)


class SynthTests(SimpleTestCase):
    def test_still_square(self):
        seq = synth_motion("translate", (0, 0), 5, 32, 32, seed=1)
        for frame in seq.frames[1:]:
            npt.assert_array_equal(frame, seq.frames[0])

    def test_translate_origin(self):
        origins = object_origins("translate", (2, 0), 10, 32, 64)
        npt.assert_array_equal(origins[:, 0, 1], 2 * np.arange(10))

    def test_sine_midpoint_is_not_linear(self):
        origins = object_origins("sine", (0, 0), 9, 32, 64, amplitude=14, period=8)
        self.assertEqual(origins[2, 0, 1], 28 + 14)
        linear = (origins[1, 0, 1] + origins[3, 0, 1]) / 2
        self.assertNotEqual(origins[2, 0, 1], linear)
        seq = synth_motion("sine", (0, 0), 9, 32, 64, seed=0, amplitude=14, period=8)
        y, x = origins[2, 0]
        self.assertNotEqual(float(seq.frames[2, y + 4, x + 4, 0]), 0.1)

    def test_leaving_frame(self):
        with self.assertRaises(SynthesisError):
            synth_motion("translate", (5, 0), 20, 32, 32, seed=0)

    def test_occlusion(self):
        origins = object_origins("occlude", (2, 0), 9, 16, 24)
        self.assertEqual(origins.shape, (9, 2, 2))
        npt.assert_array_equal(origins[:, 0, 1] + origins[:, 1, 1], np.full(9, 24 - 8))

    def test_determinism(self):
        a = synth_motion("occlude", (1, 0), 6, 16, 24, seed=7)
        b = synth_motion("occlude", (1, 0), 6, 16, 24, seed=7)
        self.assertEqual(a.frames.tobytes(), b.frames.tobytes())

    def test_dataset_layout(self):
        with tempfile.TemporaryDirectory() as tmp:
            clips = write_synthetic_dataset(tmp, 3, "translate", 9, 16, 16, seed=0)
            self.assertEqual([c.name for c in clips], ["clip_0000", "clip_0001", "clip_0002"])
            dataset = ClipDataset.from_root(tmp, k=2, context=2)
        self.assertEqual(len(dataset), 3 * len(enumerate_anchors(9, 2, 2)))
        sample = dataset.prepare(0, np.random.default_rng(0), augment_frames=True, crop_size=8)
        self.assertEqual(sample.inputs.shape, (4, 8, 8, 3))
        self.assertIsNotNone(sample.means)
