from vfi_data.services.dataset import ClipDataset
from vfi_net.services.network import build
from vfi_training.services.trainer import BEST_CHECKPOINT, LAST_CHECKPOINT, TRAIN_LOG, fit

from ...utils import FlavrCommand, success_response


class Command(FlavrCommand):
    help = "Train a FLAVR network on a root of clip directories; writes checkpoints and a per-epoch CSV log."

    def add_command_arguments(self, parser):
        parser.add_argument("--data", help="Training clip root (config key dataset_root)")
        parser.add_argument("--val", help="Validation clip root (config key val_root)")

    def run(self, **options):
        config = self.resolve_run_config(options, {"dataset_root": options["data"], "val_root": options["val"]})
        root = config.require_path("dataset_root")
        val_root = config.require_path("val_root") if config.paths.val_root is not None else None
        out = self.output_dir(config)
        config.echo(out)

        k, context = config.network.k, config.network.context
        train_set = ClipDataset.from_root(root, k, context)
        val_set = ClipDataset.from_root(val_root, k, context) if val_root is not None else None
        net = build(config.network, config.train.seed)
        log = fit(net, train_set, val_set, config.train, out)

        last = log.records[-1]
        success_response(self, f"Trained {len(log.records)} epoch(s), {log.steps} step(s)", {
            "train loss": f"{last.train_loss:.6f}",
            "train PSNR": f"{last.train_psnr:.3f} dB",
            "best val PSNR": "n/a" if log.best_val_psnr is None else f"{log.best_val_psnr:.3f} dB",
            "checkpoints": f"{out / BEST_CHECKPOINT}, {out / LAST_CHECKPOINT}",
            "log": out / TRAIN_LOG,
        })
