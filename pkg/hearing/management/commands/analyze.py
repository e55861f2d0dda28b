from ..base import NeuroAmpCommand
from ...services import analyze, single_audiogram


class Command(NeuroAmpCommand):
    help = "Write plot data for one utterance: waveforms, spectrograms, band energy and realized gains per system."
    verb = "analyze"

    def add_verb_arguments(self, parser):
        parser.add_argument("--in", dest="in_path", required=True, help="Input WAV.")
        parser.add_argument("--audiogram", required=True, help="Audiogram JSON file.")
        parser.add_argument("--audiogram-id", dest="audiogram_id", default="", help="Audiogram to use when the file holds several.")
        parser.add_argument("--model", help="Checkpoint; adds the neuroamp system when given.")
        parser.add_argument("--out", required=True, help="Directory for the CSV files.")

    def run(self, config, run_dir, options):
        audiogram = single_audiogram(options["audiogram"], options["audiogram_id"])
        written = analyze(options["in_path"], audiogram, options["out"], config.compressor, options.get("model"))
        self.stdout.write(f"{len(written)} files written to {options['out']}")
