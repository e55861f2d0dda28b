from pathlib import Path

from ..base import NeuroAmpCommand
from ...dataset import Condition
from ...services import make_corpus


class Command(NeuroAmpCommand):
    help = "Synthesize a speech-like corpus: clean WAVs, noisy mixes, audiograms.json and manifest.jsonl."
    verb = "synth_corpus"

    def add_verb_arguments(self, parser):
        parser.add_argument("--n-utts", dest="n_utts", type=int, default=10, help="Number of clean utterances (default 10).")
        parser.add_argument("--out", required=True, help="Corpus directory.")

    def run(self, config, run_dir, options):
        entries = make_corpus(options["n_utts"], Path(options["out"]), config)
        noisy = sum(1 for e in entries if e.condition == Condition.NOISY)
        self.stdout.write(f"{len(entries) - noisy} clean + {noisy} noisy entries in {options['out']}")
