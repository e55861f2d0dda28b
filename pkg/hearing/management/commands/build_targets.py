from pathlib import Path

from ..base import NeuroAmpCommand
from ...dataset import PairingMode
from ...services import make_targets


class Command(NeuroAmpCommand):
    help = "Render NAL-R + WDRC targets for a manifest and write the expanded manifest."
    verb = "build_targets"

    def add_verb_arguments(self, parser):
        parser.add_argument("--manifest", required=True, help="Manifest written by synth_corpus.")
        parser.add_argument("--audiograms", help="Audiogram bank JSON (default: audiograms.json beside the manifest).")
        parser.add_argument("--mode", choices=PairingMode.values, help="Pairing mode: neuroamp or denoising.")
        parser.add_argument("--k", type=int, help="Audiograms assigned to each utterance (default 2).")
        parser.add_argument("--target-dir", dest="target_dir", help="Where target WAVs go (default: <corpus>/target).")
        parser.add_argument("--out", help="Expanded manifest path (default: <corpus>/manifest_<mode>.jsonl).")

    def overrides(self, options):
        return {"mode": options.get("mode"), "audiograms_per_utterance": options.get("k")}

    def run(self, config, run_dir, options):
        manifest = Path(options["manifest"])
        out = options.get("out") or manifest.parent / f"manifest_{config.mode}.jsonl"
        entries = make_targets(manifest, options.get("audiograms"), out, config, options.get("target_dir"))
        self.stdout.write(f"{len(entries)} {config.mode} pairs written to {out}")
