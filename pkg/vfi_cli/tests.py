import csv
import json
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from FLAVR.exceptions import FlavrConfigError
from vfi_data.services.dataset import ClipDataset
from vfi_data.services.frame_io import frame_name, list_frames, load_frames, save_frames
from vfi_data.services.models import FrameSequence
from vfi_data.services.sampling import enumerate_gaps
from vfi_data.services.synth import write_synthetic_dataset
from vfi_net.services.models import FlavrConfig
from vfi_net.services.network import build
from vfi_training.services.checkpoint import checkpoint_from_network, save_checkpoint
from vfi_training.services.models import TrainConfig
from vfi_training.services.trainer import fit

from .exceptions import MissingConfigValueError, UnknownConfigKeyError
from .management.commands.train import Command as TrainCommand
from .services.run_config import RunConfig, parse_overrides

TINY = ["--set", "encoder_widths=4,4,8,8,8", "--set", "fusion_width=8"]


def run(*args):
    out = StringIO()
    call_command(*args, stdout=out)
    return out.getvalue()


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_checkpoint(path, config, zero=False):
    net = build(config, seed=0)
    if zero:
        for _, pair in net.parameters():
            pair.value[...] = 0
    return save_checkpoint(path, checkpoint_from_network(net))


def constant_clip(value, n_frames, size=16):
    return FrameSequence(np.full((n_frames, size, size, 3), value, dtype=np.float32))


class RunConfigTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name) / "run.cfg"
        self.path.write_text(
            "# tiny run\nk = 4\ncontext = 1\nlr0 = 0.001\nbench_ks = 2,8\ndataset_root = clips\n",
            encoding="utf-8",
        )

    def test_file_then_overrides(self):
        config = RunConfig.resolve(self.path, {"k": 2, "threads": "3"})
        self.assertEqual(config.network.k, 2)
        self.assertEqual(config.network.context, 1)
        self.assertEqual(config.train.lr0, 0.001)
        self.assertEqual(config.bench.bench_ks, (2, 8))
        self.assertEqual(config.paths.dataset_root, Path("clips"))
        self.assertEqual(config.threads, 3)

    def test_unknown_key(self):
        with self.assertRaises(UnknownConfigKeyError) as ctx:
            RunConfig.resolve(self.path, {"momentum": "0.9"})
        self.assertEqual(ctx.exception.exit_code, 2)
        self.assertEqual(ctx.exception.key, "momentum")

    def test_echo_reads_back(self):
        config = RunConfig.resolve(self.path, {"crop_size": "8"})
        echoed = config.echo(self.tmp.name)
        self.assertEqual(RunConfig.resolve(echoed), config)

    def test_required_paths(self):
        config = RunConfig.resolve(None, {})
        with self.assertRaises(MissingConfigValueError) as ctx:
            config.require_path("checkpoint")
        self.assertEqual(ctx.exception.key, "checkpoint")
        with self.assertRaises(MissingConfigValueError):
            RunConfig.resolve(self.path).require_path("dataset_root")

    def test_overrides(self):
        self.assertEqual(parse_overrides(["k=4", " lr0 = 1e-3 "]), {"k": "4", "lr0": "1e-3"})
        with self.assertRaises(FlavrConfigError):
            parse_overrides(["k"])


class CommandTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def assertExitCode(self, code, *args):
        with self.assertRaises(CommandError) as ctx:
            run(*args)
        self.assertEqual(ctx.exception.returncode, code)
        return ctx.exception

    def test_help_lists_common_flags(self):
        text = TrainCommand().create_parser("manage.py", "train").format_help()
        for flag in ("--config", "--seed", "--out", "--threads", "--k", "--context", "--set", "--data"):
            self.assertIn(flag, text)

    def test_unknown_flag(self):
        with self.assertRaises(CommandError):
            run("train", "--bogus")

    def test_synth_static_clip(self):
        out = self.root / "static"
        run("synth", "--velocity", "0,0", "--frames", "5", "--height", "16", "--width", "16", "--out", str(out))
        frames = load_frames(out).frames
        self.assertEqual(len(frames), 5)
        for frame in frames[1:]:
            np.testing.assert_array_equal(frame, frames[0])

    def test_train_without_dataset(self):
        error = self.assertExitCode(2, "train", *TINY, "--out", str(self.root / "run"))
        self.assertIn("dataset_root", str(error))

    def test_unknown_config_key(self):
        self.assertExitCode(2, "train", "--set", "momentum=0.9", "--out", str(self.root / "run"))

    def test_train_is_deterministic(self):
        data = self.root / "data"
        write_synthetic_dataset(data, 2, "translate", 6, 16, 16, seed=0)
        outputs = []
        for name in ("a", "b"):
            out = self.root / name
            run(
                "train", *TINY, "--data", str(data), "--k", "2", "--context", "1", "--seed", "7",
                "--set", "max_epochs=2", "--set", "batch_size=3", "--out", str(out),
            )
            for artifact in ("best.flvr", "last.flvr", "train_log.csv", "resolved_config.txt"):
                self.assertTrue((out / artifact).is_file(), artifact)
            outputs.append(out)
        for artifact in ("train_log.csv", "last.flvr"):
            self.assertEqual((outputs[0] / artifact).read_bytes(), (outputs[1] / artifact).read_bytes())
        self.assertEqual(len(read_rows(outputs[0] / "train_log.csv")), 2)

    def test_eval_exact_model(self):
        data = self.root / "data"
        save_frames(constant_clip(0.4, 5), data / "clip_a")
        ckpt = write_checkpoint(self.root / "zero.flvr", FlavrConfig.tiny(k=2, context=1), zero=True)
        run("eval", "--checkpoint", str(ckpt), "--data", str(data), "--out", str(self.root / "eval"))
        rows = read_rows(self.root / "eval" / "eval.csv")
        self.assertEqual(len(rows), 3 * 1 + 1)
        for row in rows:
            self.assertAlmostEqual(float(row["ssim"]), 1.0, places=6)
        self.assertEqual(rows[-1]["clip"], "mean")

    def test_eval_empty_dataset(self):
        data = self.root / "data"
        save_frames(constant_clip(0.4, 2), data / "clip_a")
        ckpt = write_checkpoint(self.root / "model.flvr", FlavrConfig.tiny(k=2, context=1))
        self.assertExitCode(2, "eval", "--checkpoint", str(ckpt), "--data", str(data), "--out", str(self.root / "eval"))

    def test_interpolate_layout(self):
        rng = np.random.default_rng(0)
        clip = self.root / "clip"
        save_frames(FrameSequence(rng.uniform(size=(13, 16, 16, 3))), clip)
        ckpt = write_checkpoint(self.root / "model.flvr", FlavrConfig.tiny(k=4, context=2))
        out = self.root / "slowmo"
        text = run("interpolate", "--checkpoint", str(ckpt), "--input", str(clip), "--out", str(out))

        gaps = enumerate_gaps(13, 2)
        names = {p.name for p in list_frames(out)}
        self.assertEqual(len(names), 13 + len(gaps) * 3)
        for position in (6 * 4 + 1, 6 * 4 + 2, 6 * 4 + 3, 12 * 4):
            self.assertIn(frame_name(position), names)
        self.assertNotIn(frame_name(1), names)
        self.assertIn("skipped gaps: 0, 11", text)
        self.assertEqual(load_frames(out).fps, 120.0)

    def test_interpolate_factor_subset_and_mismatch(self):
        clip = self.root / "clip"
        save_frames(constant_clip(0.5, 6), clip)
        ckpt = write_checkpoint(self.root / "model.flvr", FlavrConfig.tiny(k=4, context=1))
        out = self.root / "half"
        run("interpolate", "--checkpoint", str(ckpt), "--input", str(clip), "--k", "2", "--out", str(out))
        self.assertEqual(len(list_frames(out)), 6 + len(enumerate_gaps(6, 1)))
        self.assertExitCode(
            2, "interpolate", "--checkpoint", str(ckpt), "--input", str(clip), "--k", "3", "--out", str(out)
        )

    def test_interpolate_still_clip_after_fitting_it(self):
        clip = constant_clip(0.6, 6, size=8)
        net = build(FlavrConfig.tiny(k=2, context=1, loss_mode="l2"), seed=0)
        tcfg = TrainConfig(
            lr0=1e-3, batch_size=4, max_epochs=600, max_steps=600, plateau_patience=50, augment=False, shuffle=False
        )
        fit(net, ClipDataset([clip], k=2, context=1), None, tcfg)
        ckpt = save_checkpoint(self.root / "still.flvr", checkpoint_from_network(net))
        save_frames(clip, self.root / "still")

        out = self.root / "still_x2"
        run("interpolate", "--checkpoint", str(ckpt), "--input", str(self.root / "still"), "--out", str(out))
        frames = load_frames(out).frames
        self.assertEqual(len(frames), 6 + len(enumerate_gaps(6, 1)))
        np.testing.assert_array_equal(frames[0::2], np.full_like(frames[0::2], 153 / 255))
        self.assertLessEqual(float(np.abs(frames[1::2] - 153 / 255).max()), 2 / 255 + 1e-6)

    def test_gradcheck(self):
        self.assertIn("Gradient check passed", run("gradcheck"))

    def test_bench(self):
        args = [
            "bench", "--context", "1", "--set", "bench_height=16", "--set", "bench_width=16",
            "--set", "bench_runs=2", "--set", "bench_warmup=0", "--set", "bench_ks=2,4",
            "--out", str(self.root / "bench"),
        ]
        run(*args)
        self.assertEqual([row["k"] for row in read_rows(self.root / "bench" / "bench.csv")], ["2", "4"])
        study = json.loads(run(*args, "--json"))
        self.assertEqual(study["rows"][0]["ratio"], 1.0)

    def test_ablate(self):
        data = self.root / "data"
        write_synthetic_dataset(data, 2, "translate", 9, 16, 16, seed=1)
        run(
            "ablate", *TINY, "--data", str(data), "--k", "2", "--contexts", "1,2",
            "--set", "max_steps=1", "--out", str(self.root / "ablate"),
        )
        rows = read_rows(self.root / "ablate" / "ablation.csv")
        self.assertEqual([row["context"] for row in rows], ["1", "2"])
