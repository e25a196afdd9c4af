from FLAVR.exceptions import FlavrConfigError
from vfi_data.services.frame_io import save_frames
from vfi_data.services.synth import DEFAULT_SQUARE, MotionKind, synth_motion, write_synthetic_dataset
from vfi_net.utils import split_list

from ...utils import FlavrCommand, success_response


class Command(FlavrCommand):
    help = "Write synthetic clips of textured squares (translate, sine or occlude motion)."

    def add_command_arguments(self, parser):
        parser.add_argument("--kind", choices=[m.value for m in MotionKind], default=MotionKind.TRANSLATE.value)
        parser.add_argument("--clips", type=int, default=8, help="Clip directories to write")
        parser.add_argument("--frames", type=int, default=16, help="Frames per clip")
        parser.add_argument("--height", type=int, default=32)
        parser.add_argument("--width", type=int, default=32)
        parser.add_argument("--size", type=int, default=DEFAULT_SQUARE, help="Square side in pixels")
        parser.add_argument("--max-speed", type=int, default=2, help="Largest random speed (pixels/frame)")
        parser.add_argument("--velocity", help="Fixed vx,vy for a single clip written directly to --out")

    def run(self, **options):
        config = self.resolve_run_config(options)
        out = self.output_dir(config)
        seed = config.train.seed
        if options["velocity"] is not None:
            parts = split_list(options["velocity"])
            try:
                velocity = tuple(float(v) for v in parts)
            except ValueError:
                velocity = ()
            if len(velocity) != 2:
                raise FlavrConfigError(f"--velocity expects vx,vy, got '{options['velocity']}'")
            seq = synth_motion(
                options["kind"], velocity, options["frames"], options["height"], options["width"], seed,
                size=options["size"],
            )
            save_frames(seq, out)
            success_response(self, f"Wrote one {options['kind']} clip of {len(seq)} frame(s) to {out}")
            return
        clips = write_synthetic_dataset(
            out, options["clips"], options["kind"], options["frames"], options["height"], options["width"], seed,
            max_speed=options["max_speed"], size=options["size"],
        )
        success_response(self, f"Wrote {len(clips)} {options['kind']} clip(s) to {out}")
