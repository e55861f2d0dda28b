from ..base import NeuroAmpCommand
from ...neuro_amp.architectures import Architecture
from ...services import SWEEP_TABLE_FILE, SweepKind, run_sweep


class Command(NeuroAmpCommand):
    help = (
        "Hyperparameter sensitivity: train one model per size preset (small/medium/large) or per depth, "
        "score each on the test split and tabulate LCC/SRCC/MSE with 95% intervals in sweep.csv."
    )
    verb = "sweep"

    def add_verb_arguments(self, parser):
        parser.add_argument("--manifest", required=True, help="Manifest with targets (from build_targets).")
        parser.add_argument("--audiograms", help="Audiogram bank JSON (default: audiograms.json beside the manifest).")
        parser.add_argument("--kind", choices=SweepKind.values, default=SweepKind.SCALE, help="Vary size presets or depth (default scale).")
        parser.add_argument("--depths", type=int, nargs="+", default=[1, 2, 3, 4], help="Depths for --kind depth (default 1 2 3 4).")
        parser.add_argument("--arch", choices=Architecture.values, help="Network core (default lstm).")
        parser.add_argument("--epochs", type=int, help="Maximum number of epochs per variant.")
        parser.add_argument("--patience", type=int, help="Early-stopping patience in epochs.")
        parser.add_argument("--lr", type=float, help="Adam learning rate.")
        parser.add_argument("--out", required=True, help="Directory receiving sweep.csv, sweep.json and one report per variant.")

    def overrides(self, options):
        return {
            "model": {"arch": options.get("arch")},
            "train": {
                "max_epochs": options.get("epochs"),
                "early_stop_patience": options.get("patience"),
                "lr": options.get("lr"),
            },
        }

    def run(self, config, run_dir, options):
        points = run_sweep(
            config, options["manifest"], options.get("audiograms"), options["out"], options["kind"], options["depths"]
        )
        for point in points:
            lsd = point.summary["lsd_db"]
            if lsd["srcc"] is None:
                ranking = "lsd srcc undefined (constant scores)"
            else:
                low, high = lsd["srcc_ci95"]
                ranking = f"lsd srcc {lsd['srcc']:.4f} [{low:.4f}, {high:.4f}]"
            self.stdout.write(f"{point.variant}: {point.parameter_count} parameters, {ranking}")
        self.stdout.write(f"table written to {options['out']}/{SWEEP_TABLE_FILE}")
