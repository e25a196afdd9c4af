from FLAVR.exceptions import FlavrConfigError
from vfi_data.services.dataset import load_clip_root
from vfi_net.utils import split_list
from vfi_training.services.ablation import context_ablation

from ...utils import FlavrCommand, success_response

ABLATION_CSV = "ablation.csv"


class Command(FlavrCommand):
    help = "Train and evaluate one network per input context size C on the same clips."

    def add_command_arguments(self, parser):
        parser.add_argument("--data", help="Training clip root (config key dataset_root)")
        parser.add_argument("--val", help="Evaluation clip root (config key val_root; defaults to the training root)")
        parser.add_argument("--contexts", default="1,2,3", help="Comma-separated context sizes")

    def run(self, **options):
        config = self.resolve_run_config(options, {"dataset_root": options["data"], "val_root": options["val"]})
        try:
            contexts = [int(c) for c in split_list(options["contexts"])]
        except ValueError:
            contexts = []
        if not contexts or min(contexts) < 1:
            raise FlavrConfigError(f"--contexts expects positive integers, got '{options['contexts']}'")

        _, train_clips = load_clip_root(config.require_path("dataset_root"))
        val_clips = train_clips
        if config.paths.val_root is not None:
            _, val_clips = load_clip_root(config.require_path("val_root"))
        out = self.output_dir(config)
        config.echo(out)
        table = context_ablation(train_clips, val_clips, contexts, config.network, config.train, out)
        path = out / ABLATION_CSV
        table.to_csv(path, index=False)
        success_response(self, f"Context ablation over C={contexts}", {
            **{f"C={row.context}": f"{row.val_psnr:.3f} dB / SSIM {row.val_ssim:.4f}" for row in table.itertuples()},
            "report": path,
        })
