from FLAVR.exceptions import FlavrProcessingError
from vfi_net.services.gradcheck import check_network_gradients
from vfi_net.services.models import FlavrConfig

from ...utils import FlavrCommand, success_response


class Command(FlavrCommand):
    help = "Finite-difference check of the full network backward pass on the tiny float64 config."

    def add_command_arguments(self, parser):
        parser.add_argument("--size", type=int, default=16, help="Input height and width")
        parser.add_argument("--tolerance", type=float, default=1e-5, help="Largest accepted relative error")

    def run(self, **options):
        config = self.resolve_run_config(options)
        network = config.network
        tiny = FlavrConfig.tiny(
            dtype="float64",
            k=network.k,
            context=network.context,
            fusion_mode=network.fusion_mode,
            gating_enabled=network.gating_enabled,
            temporal_stride=network.temporal_stride,
        )
        report = check_network_gradients(tiny, seed=config.train.seed, size=options["size"])
        summary = f"max relative error {report.max_relative_error:.3e} over {report.probes} probe(s)"
        if not report.passed(options["tolerance"]):
            raise FlavrProcessingError(f"gradient check failed: {summary} > {options['tolerance']:g}")
        success_response(self, f"Gradient check passed: {summary}", {"skipped at kinks": report.skipped})
