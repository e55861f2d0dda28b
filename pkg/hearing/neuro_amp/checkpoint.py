"""Versioned little-endian checkpoint format.

    b"NAMP" | u32 version | u32 n | n bytes of JSON config
    u32 n_params, then per parameter:
        u32 n | n bytes of UTF-8 name | u32 rank | rank x u32 dims | f32 data
"""

import json
import logging
import struct
from pathlib import Path

import numpy as np

from ..exceptions import CorruptCheckpoint, InvalidConfig, IoFailure, VersionMismatch
from .architectures import AmpModel, ModelConfig, init_params

logger = logging.getLogger(__name__)

MAGIC = b"NAMP"
FORMAT_VERSION = 1


def encode_model(model: AmpModel) -> bytes:
    config = json.dumps({"model": model.config.to_dict(), "rng_seed": model.rng_seed}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(config)), config, struct.pack("<I", len(model.params))]
    for name in sorted(model.params):
        value = np.ascontiguousarray(model.params[name], dtype="<f4")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)) + encoded)
        parts.append(struct.pack(f"<I{value.ndim}I", value.ndim, *value.shape))
        parts.append(value.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.blob):
            raise CorruptCheckpoint(f"truncated at byte {self.offset} (need {n} more)")
        chunk = self.blob[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def decode_model(blob: bytes) -> AmpModel:
    reader = _Reader(blob)
    if reader.take(4) != MAGIC:
        raise CorruptCheckpoint("bad magic bytes")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint format {version}, this build reads {FORMAT_VERSION}")

    try:
        header = json.loads(reader.take(reader.u32()).decode("utf-8"))
        config = ModelConfig(**header["model"])
        rng_seed = int(header.get("rng_seed", 0))
    except (ValueError, KeyError, TypeError, InvalidConfig) as exc:
        raise CorruptCheckpoint(f"unreadable config block: {exc}") from exc

    expected = {name: value.shape for name, value in init_params(config, np.random.default_rng(0)).items()}
    params = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode("utf-8", errors="replace")
        rank = reader.u32()
        shape = tuple(reader.u32() for _ in range(rank))
        if expected.get(name) != shape:
            raise CorruptCheckpoint(f"parameter {name!r} has shape {shape}, config expects {expected.get(name)}")
        count = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(reader.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)

    if reader.offset != len(blob):
        raise CorruptCheckpoint(f"{len(blob) - reader.offset} trailing bytes")
    if set(params) != set(expected):
        raise CorruptCheckpoint(f"missing parameters: {sorted(set(expected) - set(params))}")
    if not all(np.all(np.isfinite(v)) for v in params.values()):
        raise CorruptCheckpoint("non-finite parameter values")
    return AmpModel(config, params, rng_seed)


def save_model(path, model: AmpModel) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_model(model))
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    logger.info("saved %s model (%d parameters) to %s", model.config.arch, model.parameter_count, path)


def load_model(path) -> AmpModel:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    return decode_model(blob)
