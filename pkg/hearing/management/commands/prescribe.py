import json

from ..base import NeuroAmpCommand
from ...services import prescribe


class Command(NeuroAmpCommand):
    help = "Print the NAL-R insertion gains (dB) at 250-6000 Hz for an audiogram file as JSON."
    verb = "prescribe"

    def add_verb_arguments(self, parser):
        parser.add_argument("--audiogram", required=True, help="Audiogram JSON: one object or an array of objects.")

    def run(self, config, run_dir, options):
        gains = prescribe(options["audiogram"])
        payload = gains[0] if len(gains) == 1 else gains
        self.stdout.write(json.dumps(payload, sort_keys=True))
