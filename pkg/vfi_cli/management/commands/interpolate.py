from vfi_data.services.frame_io import load_frames, write_frames
from vfi_training.services.checkpoint import load_checkpoint, network_from_checkpoint

from ...exceptions import FactorMismatchError
from ...services.interpolation import interpolate_sequence
from ...utils import FlavrCommand, success_response


class Command(FlavrCommand):
    help = (
        "Upsample a frame directory with a trained checkpoint. Originals keep position i*k, "
        "predictions fill the positions in between; gaps without full context are skipped."
    )

    def add_command_arguments(self, parser):
        parser.add_argument("--checkpoint", help="Checkpoint file (config key checkpoint)")
        parser.add_argument("--input", help="Frame directory to upsample (config key input_dir)")

    def run(self, **options):
        # k and C come from the checkpoint; the flags only request a compatible view of it
        k, context = options["k"], options["context"]
        config = self.resolve_run_config(
            {**options, "k": None, "context": None},
            {"checkpoint": options["checkpoint"], "input_dir": options["input"]},
        )
        ckpt = load_checkpoint(config.require_path("checkpoint"))
        if context is not None and context != ckpt.config.context:
            raise FactorMismatchError(f"checkpoint was trained with C={ckpt.config.context}, got --context {context}")
        net = network_from_checkpoint(ckpt)
        seq = load_frames(config.require_path("input_dir"))
        result = interpolate_sequence(net, seq, k, batch_size=config.train.batch_size)

        out = self.output_dir(config)
        write_frames(result.frames, out, result.fps)
        config.echo(out)
        success_response(self, f"Wrote {len(result.frames)} frame(s) to {out}", {
            "factor": result.k,
            "new frames": result.new_frames,
            "skipped gaps": ", ".join(str(i) for i in result.skipped) or "none",
        })
