import json

from ..base import NeuroAmpCommand
from ...services import evaluate_dirs


class Command(NeuroAmpCommand):
    help = (
        "Score a test system against a reference system: per-utterance proxies in report.csv, "
        "LCC/SRCC/MSE summary in summary.json."
    )
    verb = "eval"

    def add_verb_arguments(self, parser):
        parser.add_argument("--ref-dir", dest="ref_dir", required=True, help="WAVs of the reference system.")
        parser.add_argument("--test-dir", dest="test_dir", required=True, help="WAVs of the system under test, same file names.")
        parser.add_argument("--out", required=True, help="Report directory.")
        parser.add_argument("--anchor-dir", dest="anchor_dir", help="WAVs every proxy is scored against (default: the reference).")
        parser.add_argument("--manifest", help="Manifest supplying conditions and clean anchors by <utt_id>__<audiogram_id>.")

    def run(self, config, run_dir, options):
        report = evaluate_dirs(
            options["ref_dir"],
            options["test_dir"],
            options["out"],
            anchor_dir=options.get("anchor_dir"),
            manifest_path=options.get("manifest"),
            jobs=config.jobs,
        )
        headline = {proxy: {k: report.summary[proxy][k] for k in ("lcc", "srcc", "mse")} for proxy in report.summary}
        self.stdout.write(json.dumps(headline, sort_keys=True))
