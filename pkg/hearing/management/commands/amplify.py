from ..base import NeuroAmpCommand
from ...services import amplify_file, single_audiogram


class Command(NeuroAmpCommand):
    help = "Amplify a WAV file with the NAL-R + WDRC reference pipeline."
    verb = "amplify"

    def add_verb_arguments(self, parser):
        parser.add_argument("--in", dest="in_path", required=True, help="Input WAV (16 kHz mono PCM16).")
        parser.add_argument("--audiogram", required=True, help="Audiogram JSON file.")
        parser.add_argument("--audiogram-id", dest="audiogram_id", default="", help="Audiogram to use when the file holds several.")
        parser.add_argument("--out", required=True, help="Output WAV path.")

    def run(self, config, run_dir, options):
        audiogram = single_audiogram(options["audiogram"], options["audiogram_id"])
        out = amplify_file(options["in_path"], audiogram, options["out"], config.compressor)
        self.stdout.write(f"wrote {options['out']} ({len(out)} samples, {out.clip_count} clipped)")
