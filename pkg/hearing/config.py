"""Run configuration: built-in defaults, overlaid by a JSON config file, overlaid by flags."""

import copy
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

from django.conf import settings

from .dataset import PairingMode
from .exceptions import InvalidConfig, IoFailure
from .neuro_amp.architectures import ModelConfig
from .neuro_amp.training import TrainConfig
from .wdrc import CompressorConfig

logger = logging.getLogger(__name__)

RESOLVED_CONFIG_FILE = "resolved_config.json"


def default_document() -> Dict[str, Any]:
    return {
        "seed": getattr(settings, "NEUROAMP_SEED", 0),
        "jobs": getattr(settings, "NEUROAMP_JOBS", 1),
        "mode": PairingMode.NEUROAMP.value,
        "audiograms_per_utterance": 2,
        "compressor": {},
        "model": {"preset": "desk"},
        "train": {},
        "paths": {},
    }


def merge(base: dict, override: dict) -> dict:
    """Recursive dict overlay; values of `override` win, None values are skipped."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = value
    return merged


@dataclass(frozen=True)
class RunConfig:
    seed: int
    jobs: int
    mode: str
    audiograms_per_utterance: int
    compressor: CompressorConfig
    model: ModelConfig
    train: TrainConfig
    paths: Dict[str, str]
    document: Dict[str, Any]

    def to_dict(self) -> dict:
        """Fully resolved view, every default made explicit."""
        return {
            "seed": self.seed,
            "jobs": self.jobs,
            "mode": str(self.mode),
            "audiograms_per_utterance": self.audiograms_per_utterance,
            "compressor": self.compressor.to_dict(),
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "paths": dict(sorted(self.paths.items())),
        }


def _build(serializer_class, data: dict, section: str):
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise InvalidConfig(f"{section}: {dict(serializer.errors)}")
    return serializer.save()


def load_document(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidConfig(f"{path}: config must be a JSON object")
    return data


def resolve(config_path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    from .serializers import CompressorConfigSerializer, ModelConfigSerializer, RunConfigSerializer, TrainConfigSerializer

    document = default_document()
    if config_path:
        document = merge(document, load_document(config_path))
    document = merge(document, overrides or {})

    serializer = RunConfigSerializer(data=document)
    if not serializer.is_valid():
        raise InvalidConfig(f"config: {dict(serializer.errors)}")
    train_section = merge({"seed": document["seed"]}, document.get("train", {}))
    return RunConfig(
        seed=int(document["seed"]),
        jobs=int(document["jobs"]),
        mode=document["mode"],
        audiograms_per_utterance=int(document["audiograms_per_utterance"]),
        compressor=_build(CompressorConfigSerializer, document.get("compressor", {}), "compressor"),
        model=_build(ModelConfigSerializer, document.get("model", {}), "model"),
        train=_build(TrainConfigSerializer, train_section, "train"),
        paths=dict(document.get("paths", {})),
        document=document,
    )


def write_resolved(run_dir, config: RunConfig) -> Path:
    path = Path(run_dir) / RESOLVED_CONFIG_FILE
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    logger.debug("resolved config written to %s", path)
    return path
