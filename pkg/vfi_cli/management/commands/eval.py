from vfi_data.services.dataset import ClipDataset
from vfi_metrics.services.evaluation import evaluate
from vfi_training.services.checkpoint import load_checkpoint, network_from_checkpoint

from ...exceptions import FactorMismatchError
from ...utils import FlavrCommand, success_response

EVAL_CSV = "eval.csv"


class Command(FlavrCommand):
    help = "Evaluate a checkpoint (PSNR/SSIM per predicted frame) on a root of clip directories."

    def add_command_arguments(self, parser):
        parser.add_argument("--checkpoint", help="Checkpoint file (config key checkpoint)")
        parser.add_argument("--data", help="Evaluation clip root (config key dataset_root)")

    def run(self, **options):
        config = self.resolve_run_config(
            {**options, "k": None, "context": None},
            {"checkpoint": options["checkpoint"], "dataset_root": options["data"]},
        )
        net = network_from_checkpoint(load_checkpoint(config.require_path("checkpoint")))
        for flag, value in (("k", net.config.k), ("context", net.config.context)):
            if options[flag] is not None and options[flag] != value:
                raise FactorMismatchError(f"checkpoint was trained with {flag}={value}, got --{flag} {options[flag]}")
        dataset = ClipDataset.from_root(config.require_path("dataset_root"), net.config.k, net.config.context)
        report = evaluate(net, dataset, config.train.batch_size)

        out = self.output_dir(config)
        path = report.write_csv(out / EVAL_CSV)
        config.echo(out)
        success_response(self, report.summary(), {"report": path})
