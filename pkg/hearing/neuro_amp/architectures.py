"""Audiogram-conditioned amplifier networks.

Every architecture shares the same front and back end:

    Z      = ReLU(W_a . (thresholds / 120) + b_a)       (audiogram embedding)
    Concat = [log1p|STFT| , Z replicated over T]        (T x (257 + embed))
    H      = core(Concat)                               (cnn | lstm | crnn | transformer)
    Y_hat  = softplus(Dense_257(H) + s * L)             (per-frame log1p magnitude)

L = log(expm1(X)) is the inverse softplus of the input features, so with the
per-bin skip weights s at one and a silent head the network passes its input
through unchanged; the head then only has to learn a log-domain gain. With
`skip_connection` off the s * L term is dropped.
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Tuple

import numpy as np
from django.db import models

from ..exceptions import InvalidConfig, ShapeMismatch
from ..prescription import MAX_THRESHOLD_DB_HL, Audiogram
from . import layers
from .tensor import Tensor, concat, parameters

logger = logging.getLogger(__name__)

N_THRESHOLDS = 6
OUT_BINS = 257
KERNEL_SIZE = 3
SKIP_FLOOR = 1e-6
HEAD_INIT_SCALE = 0.1


class Architecture(models.TextChoices):
    CNN = "cnn", "CNN"
    LSTM = "lstm", "LSTM"
    CRNN = "crnn", "CRNN"
    TRANSFORMER = "transformer", "Transformer"


@dataclass(frozen=True)
class ModelConfig:
    arch: str = Architecture.LSTM
    audiogram_embed_dim: int = 32
    cnn_filters: Tuple[int, ...] = (8, 16)
    lstm_units: int = 32
    lstm_layers: int = 2
    crnn_filters: Tuple[int, ...] = (8, 16)
    tfm_blocks: int = 2
    tfm_heads: int = 4
    tfm_dim: int = 64
    tfm_ffn_dim: int = 128
    positional_encoding: bool = True
    skip_connection: bool = True
    out_bins: int = OUT_BINS

    def __post_init__(self):
        object.__setattr__(self, "arch", str(self.arch))
        object.__setattr__(self, "cnn_filters", tuple(int(v) for v in self.cnn_filters))
        object.__setattr__(self, "crnn_filters", tuple(int(v) for v in self.crnn_filters))
        if self.arch not in Architecture.values:
            raise InvalidConfig(f"unknown architecture {self.arch!r}")
        if self.out_bins != OUT_BINS:
            raise InvalidConfig(f"out_bins must be {OUT_BINS}")
        if self.tfm_dim % self.tfm_heads:
            raise InvalidConfig("tfm_dim must be divisible by tfm_heads")
        positive = [self.audiogram_embed_dim, self.lstm_units, self.lstm_layers, self.tfm_blocks,
                    self.tfm_heads, self.tfm_dim, self.tfm_ffn_dim, *self.cnn_filters, *self.crnn_filters]
        if any(v <= 0 for v in positive) or not self.cnn_filters or not self.crnn_filters:
            raise InvalidConfig("model dimensions must be positive")

    @property
    def input_dim(self) -> int:
        return self.out_bins + self.audiogram_embed_dim

    def to_dict(self) -> dict:
        return {key: list(value) if isinstance(value, tuple) else value for key, value in asdict(self).items()}


# "desk" trains in minutes on one core; "full" is the 256-unit configuration.
# small/medium/large form the width-and-depth ladder of the sensitivity sweep
# and medium equals desk.
PRESETS: Dict[str, dict] = {
    "desk": {},
    "full": {
        "cnn_filters": (32, 64, 128, 256),
        "lstm_units": 256,
        "lstm_layers": 2,
        "crnn_filters": (16, 32, 64, 128),
        "tfm_blocks": 4,
        "tfm_heads": 16,
        "tfm_dim": 256,
        "tfm_ffn_dim": 512,
    },
    "small": {
        "cnn_filters": (8,),
        "lstm_units": 16,
        "lstm_layers": 1,
        "crnn_filters": (8,),
        "tfm_blocks": 1,
        "tfm_heads": 2,
        "tfm_dim": 32,
        "tfm_ffn_dim": 64,
    },
    "medium": {},
    "large": {
        "cnn_filters": (16, 32, 64),
        "lstm_units": 64,
        "lstm_layers": 3,
        "crnn_filters": (16, 32, 64),
        "tfm_blocks": 3,
        "tfm_heads": 8,
        "tfm_dim": 128,
        "tfm_ffn_dim": 256,
    },
}
SCALE_PRESETS = ("small", "medium", "large")


def preset_config(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise InvalidConfig(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(ModelConfig(), **{**PRESETS[name], **overrides})


def with_depth(cfg: ModelConfig, depth: int) -> ModelConfig:
    """Same widths with `depth` stacked core blocks: encoder blocks, LSTM layers or doubling conv layers."""
    if depth < 1:
        raise InvalidConfig(f"depth must be at least 1, got {depth}")
    if cfg.arch == Architecture.TRANSFORMER:
        return replace(cfg, tfm_blocks=depth)
    if cfg.arch in (Architecture.LSTM, Architecture.CRNN):
        return replace(cfg, lstm_layers=depth)
    return replace(cfg, cnn_filters=tuple(cfg.cnn_filters[0] * 2**i for i in range(depth)))


@dataclass(eq=False)
class AmpModel:
    config: ModelConfig
    params: Dict[str, np.ndarray] = field(default_factory=dict)
    rng_seed: int = 0

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0, dtype=np.float32) -> "AmpModel":
        rng = np.random.default_rng(seed)
        params = {name: value.astype(dtype) for name, value in init_params(config, rng).items()}
        return cls(config, params, seed)

    def astype(self, dtype) -> "AmpModel":
        return AmpModel(self.config, {k: v.astype(dtype) for k, v in self.params.items()}, self.rng_seed)

    def copy(self) -> "AmpModel":
        return AmpModel(self.config, {k: v.copy() for k, v in self.params.items()}, self.rng_seed)

    @property
    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))


# parameters -----------------------------------------------------------------------
def _cnn_stack_init(params, prefix, n_in, filters, rng) -> int:
    for index, n_out in enumerate(filters):
        layers.init_conv1d(params, f"{prefix}.conv{index}", n_in, n_out, KERNEL_SIZE, rng)
        n_in = n_out
    return n_in


def _lstm_stack_init(params, prefix, n_in, cfg: ModelConfig, rng) -> int:
    for index in range(cfg.lstm_layers):
        layers.init_lstm(params, f"{prefix}.lstm{index}", n_in, cfg.lstm_units, rng)
        n_in = cfg.lstm_units
    return n_in


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    params: Dict[str, np.ndarray] = {}
    layers.init_dense(params, "embed", N_THRESHOLDS, cfg.audiogram_embed_dim, rng)

    if cfg.arch == Architecture.CNN:
        width = _cnn_stack_init(params, "core", cfg.input_dim, cfg.cnn_filters, rng)
    elif cfg.arch == Architecture.LSTM:
        width = _lstm_stack_init(params, "core", cfg.input_dim, cfg, rng)
    elif cfg.arch == Architecture.CRNN:
        width = _cnn_stack_init(params, "core", cfg.input_dim, cfg.crnn_filters, rng)
        width = _lstm_stack_init(params, "core", width, cfg, rng)
    else:
        layers.init_dense(params, "core.input", cfg.input_dim, cfg.tfm_dim, rng)
        for index in range(cfg.tfm_blocks):
            layers.init_encoder_block(params, f"core.block{index}", cfg.tfm_dim, cfg.tfm_ffn_dim, rng)
        width = cfg.tfm_dim

    layers.init_dense(params, "head", width, cfg.out_bins, rng, scale=HEAD_INIT_SCALE if cfg.skip_connection else 1.0)
    if cfg.skip_connection:
        params["head.skip"] = np.ones(cfg.out_bins)
    return params


def count_parameters(cfg: ModelConfig) -> int:
    """Closed-form parameter count for a configuration."""
    total = layers.dense_count(N_THRESHOLDS, cfg.audiogram_embed_dim)

    def cnn(n_in, filters):
        count = 0
        for n_out in filters:
            count += layers.conv1d_count(n_in, n_out, KERNEL_SIZE)
            n_in = n_out
        return count, n_in

    def rnn(n_in):
        count = 0
        for _ in range(cfg.lstm_layers):
            count += layers.lstm_count(n_in, cfg.lstm_units)
            n_in = cfg.lstm_units
        return count, n_in

    if cfg.arch == Architecture.CNN:
        count, width = cnn(cfg.input_dim, cfg.cnn_filters)
    elif cfg.arch == Architecture.LSTM:
        count, width = rnn(cfg.input_dim)
    elif cfg.arch == Architecture.CRNN:
        conv_count, width = cnn(cfg.input_dim, cfg.crnn_filters)
        rnn_count, width = rnn(width)
        count = conv_count + rnn_count
    else:
        count = layers.dense_count(cfg.input_dim, cfg.tfm_dim)
        count += cfg.tfm_blocks * layers.encoder_block_count(cfg.tfm_dim, cfg.tfm_ffn_dim)
        width = cfg.tfm_dim
    skip = cfg.out_bins if cfg.skip_connection else 0
    return total + count + layers.dense_count(width, cfg.out_bins) + skip


# forward --------------------------------------------------------------------------
def inverse_softplus(logmag: np.ndarray) -> np.ndarray:
    """log(expm1(x)), floored so silent bins map to a large negative value instead of -inf."""
    return np.log(np.maximum(np.expm1(logmag), SKIP_FLOOR))


def embed_audiogram(a: Audiogram, p: Dict[str, Tensor]) -> Tensor:
    normalized = Tensor(a.as_array() / MAX_THRESHOLD_DB_HL)
    return layers.dense(p, "embed", normalized).relu()


def _core(cfg: ModelConfig, p: Dict[str, Tensor], x: Tensor) -> Tensor:
    if cfg.arch in (Architecture.CNN, Architecture.CRNN):
        filters = cfg.cnn_filters if cfg.arch == Architecture.CNN else cfg.crnn_filters
        for index in range(len(filters)):
            x = layers.conv1d(p, f"core.conv{index}", x).relu()
    if cfg.arch in (Architecture.LSTM, Architecture.CRNN):
        for index in range(cfg.lstm_layers):
            x = layers.lstm(p, f"core.lstm{index}", x)
    if cfg.arch == Architecture.TRANSFORMER:
        x = layers.dense(p, "core.input", x)
        if cfg.positional_encoding:
            x = x + layers.sinusoidal_positions(x.shape[0], cfg.tfm_dim)
        for index in range(cfg.tfm_blocks):
            x = layers.encoder_block(p, f"core.block{index}", x, cfg.tfm_heads)
    return x


def forward_graph(model: AmpModel, input_logmag: np.ndarray, a: Audiogram) -> Tuple[Tensor, Dict[str, Tensor]]:
    """Build the differentiable graph; returns the prediction and the parameter leaves."""
    features = np.asarray(input_logmag, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != model.config.out_bins:
        raise ShapeMismatch(f"expected T x {model.config.out_bins} features, got {features.shape}")
    p = parameters(model.params.items())

    embedding = embed_audiogram(a, p)
    n_frames = features.shape[0]
    replicated = embedding.reshape(1, -1) * Tensor(np.ones((n_frames, 1)))
    x = concat([Tensor(features), replicated], axis=1)

    hidden = _core(model.config, p, x)
    logits = layers.dense(p, "head", hidden)
    if model.config.skip_connection:
        logits = logits + Tensor(inverse_softplus(features)) * p["head.skip"]
    return logits.softplus(), p


def forward(model: AmpModel, input_logmag: np.ndarray, a: Audiogram) -> np.ndarray:
    prediction, _ = forward_graph(model, input_logmag, a)
    return prediction.data
