from ..base import NeuroAmpCommand
from ...services import mix_files


class Command(NeuroAmpCommand):
    help = "Mix a clean WAV with a noise WAV at a target SNR."
    verb = "mix"

    def add_verb_arguments(self, parser):
        parser.add_argument("--clean", required=True, help="Clean speech WAV.")
        parser.add_argument("--noise", required=True, help="Noise WAV; looped when shorter than the speech.")
        parser.add_argument("--snr", type=float, required=True, help="Target SNR in dB.")
        parser.add_argument("--out", required=True, help="Output WAV path.")

    def run(self, config, run_dir, options):
        mixture = mix_files(options["clean"], options["noise"], options["snr"], options["out"], config.seed)
        self.stdout.write(
            f"wrote {options['out']} (noise scale {mixture.noise_scale:.6g}, peak scale {mixture.peak_scale:.6g})"
        )
