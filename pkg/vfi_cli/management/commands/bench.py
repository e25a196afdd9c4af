from vfi_bench.services.timing import scaling_study
from vfi_net.services.models import FlavrConfig

from ...utils import FlavrCommand, success_response

BENCH_CSV = "bench.csv"


class Command(FlavrCommand):
    help = (
        "Time forward passes for every bench_ks factor against k=2, plus the recursive k=2 baseline. "
        "Inputs are prepared before timing; warmup runs are excluded."
    )

    def add_command_arguments(self, parser):
        parser.add_argument("--json", action="store_true", help="Print the full study as JSON")

    def run(self, **options):
        config = self.resolve_run_config(options)
        bench = config.bench
        base = config.network
        if bench.bench_preset:
            base = FlavrConfig.bench(
                context=base.context,
                dtype=base.dtype,
                fusion_mode=base.fusion_mode,
                gating_enabled=base.gating_enabled,
            )
        study = scaling_study(
            base, bench.bench_ks, bench.bench_height, bench.bench_width,
            bench.bench_warmup, bench.bench_runs, config.train.seed, bench.bench_recursive,
        )

        out = self.output_dir(config)
        path = study.write_csv(out / BENCH_CSV)
        config.echo(out)
        if options["json"]:
            self.stdout.write(study.to_json())
            return
        success_response(self, f"Scaling study at {bench.bench_height}x{bench.bench_width}", {
            **{f"k={row.k}": f"{row.mean_time * 1e3:.2f} ms (x{row.ratio:.2f})"
               + (f", recursive x{row.recursive_ratio:.2f}" if row.recursive_ratio is not None else "")
               for row in study.rows},
            "report": path,
        })
