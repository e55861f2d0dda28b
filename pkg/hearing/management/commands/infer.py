from ..base import NeuroAmpCommand
from ...dataset import Split, read_manifest, select_split
from ...exceptions import InvalidConfig
from ...neuro_amp import infer_manifest, load_model
from ...prescription import audiograms_by_id, load_audiograms
from ...services import infer_file, single_audiogram


class Command(NeuroAmpCommand):
    help = "Run a trained model on one WAV file, or on every entry of a manifest split."
    verb = "infer"

    def add_verb_arguments(self, parser):
        parser.add_argument("--model", required=True, help="Checkpoint written by train (model.namp).")
        parser.add_argument("--in", dest="in_path", help="Input WAV for single-file inference.")
        parser.add_argument("--audiogram", help="Audiogram JSON (single file) or bank JSON (manifest mode).")
        parser.add_argument("--audiogram-id", dest="audiogram_id", default="", help="Audiogram to use when the file holds several.")
        parser.add_argument("--out", help="Output WAV for single-file inference.")
        parser.add_argument("--manifest", help="Manifest with assigned audiograms for batch inference.")
        parser.add_argument("--split", choices=Split.values, default=Split.TEST, help="Manifest split to process (default test).")
        parser.add_argument("--out-dir", dest="out_dir", help="Output directory for batch inference.")

    def run(self, config, run_dir, options):
        if options.get("manifest"):
            if not options.get("audiogram") or not options.get("out_dir"):
                raise InvalidConfig("--manifest needs --audiogram and --out-dir")
            entries = select_split(read_manifest(options["manifest"]), options["split"])
            audiograms = audiograms_by_id(load_audiograms(options["audiogram"]))
            written = infer_manifest(load_model(options["model"]), entries, audiograms, options["out_dir"], jobs=config.jobs)
            self.stdout.write(f"{len(written)} files written to {options['out_dir']}")
            return
        if not (options.get("in_path") and options.get("audiogram") and options.get("out")):
            raise InvalidConfig("single-file inference needs --in, --audiogram and --out")
        audiogram = single_audiogram(options["audiogram"], options["audiogram_id"])
        out = infer_file(options["model"], options["in_path"], audiogram, options["out"])
        self.stdout.write(f"wrote {options['out']} ({len(out)} samples)")
