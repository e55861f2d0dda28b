from ..base import NeuroAmpCommand
from ...dataset import PairingMode
from ...neuro_amp.architectures import PRESETS, Architecture
from ...services import run_training


class Command(NeuroAmpCommand):
    help = "Train an amplifier network on a target manifest; writes model.namp and history.csv to the run directory."
    verb = "train"

    def add_verb_arguments(self, parser):
        parser.add_argument("--manifest", required=True, help="Manifest with targets (from build_targets).")
        parser.add_argument("--audiograms", help="Audiogram bank JSON (default: audiograms.json beside the manifest).")
        parser.add_argument("--arch", choices=Architecture.values, help="Network core (default lstm).")
        parser.add_argument("--preset", choices=sorted(PRESETS), help="Model size preset (default desk).")
        parser.add_argument("--mode", choices=PairingMode.values, help="Pairing mode the manifest was built with.")
        parser.add_argument("--epochs", type=int, help="Maximum number of epochs.")
        parser.add_argument("--patience", type=int, help="Early-stopping patience in epochs.")
        parser.add_argument("--lr", type=float, help="Adam learning rate.")

    def overrides(self, options):
        return {
            "mode": options.get("mode"),
            "model": {"arch": options.get("arch"), "preset": options.get("preset")},
            "train": {
                "max_epochs": options.get("epochs"),
                "early_stop_patience": options.get("patience"),
                "lr": options.get("lr"),
            },
        }

    def run(self, config, run_dir, options):
        result, run = run_training(config, options["manifest"], options.get("audiograms"), run_dir)
        self.stdout.write(
            f"run {run.pk}: {len(result.history)} epochs, best epoch {result.best_epoch} "
            f"(val loss {result.best_val_loss:.6f}), checkpoint {run.checkpoint_path}"
        )
