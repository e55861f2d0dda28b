import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from ..config import RunConfig, merge, resolve, write_resolved
from ..exceptions import NeuroAmpError
from ..services import default_run_dir

logger = logging.getLogger(__name__)


def error_line(exc: NeuroAmpError) -> str:
    detail = " ".join(str(exc).split())
    return f"{exc.category}: {type(exc).__name__}: {detail}"


class NeuroAmpCommand(BaseCommand):
    """Shared flags, config resolution and error mapping for every verb.

    Subclasses implement `add_verb_arguments` and `run`. Errors raised as
    NeuroAmpError leave the process with the category's exit code and a
    single line `<Category>: <ErrorName>: <detail>` on stderr.
    """

    verb = ""

    def add_arguments(self, parser):
        parser.add_argument("--config", help="JSON run configuration; flags override its values.")
        parser.add_argument("--seed", type=int, help="Seed for every random choice (default: NEUROAMP_SEED).")
        parser.add_argument("--jobs", type=int, help="Worker processes for per-utterance work (default: NEUROAMP_JOBS).")
        parser.add_argument(
            "--run-dir",
            dest="run_dir",
            help="Directory receiving resolved_config.json and run outputs (default: NEUROAMP_RUNS_DIR/<verb>).",
        )
        self.add_verb_arguments(parser)

    def add_verb_arguments(self, parser):
        pass

    def overrides(self, options) -> dict:
        """Config values set by verb-specific flags."""
        return {}

    def resolve_config(self, options) -> RunConfig:
        flags = {"seed": options.get("seed"), "jobs": options.get("jobs")}
        if options.get("seed") is not None:
            flags["train"] = {"seed": options["seed"]}
        return resolve(options.get("config"), merge(flags, self.overrides(options)))

    def run_dir(self, options) -> Path:
        return Path(options.get("run_dir") or default_run_dir(self.verb or self.__module__.rsplit(".", 1)[-1]))

    def handle(self, *args, **options):
        try:
            if options.get("jobs") is not None and options["jobs"] < 1:
                raise CommandError("UsageError: InvalidConfig: --jobs must be at least 1", returncode=2)
            config = self.resolve_config(options)
            run_dir = self.run_dir(options)
            write_resolved(run_dir, config)
            self.run(config, run_dir, options)
        except CommandError:
            raise
        except NeuroAmpError as exc:
            raise CommandError(error_line(exc), returncode=exc.exit_code) from exc
        except Exception as exc:
            logger.exception("unexpected failure in %s", self.verb or type(self).__module__)
            raise CommandError(f"InternalError: {type(exc).__name__}: {' '.join(str(exc).split())}", returncode=4) from exc

    def run(self, config: RunConfig, run_dir: Path, options) -> None:
        raise NotImplementedError
