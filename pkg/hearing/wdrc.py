"""Multiband wide dynamic range compression and the NAL-R+WDRC reference amplifier.

Processing order of amplify_reference:
  1. STFT of the input.
  2. NAL-R insertion gain per bin.
  3. Band levels (dB SPL) of the amplified magnitudes, smoothed with
     attack/release one-pole filters.
  4. Static compression gain per band, interpolated over log-frequency to
     every bin and applied to the frames.
  5. ISTFT; phase is never modified.

Level calibration: a full-scale sine reads `calib_spl_at_0_dbfs` dB SPL. With
the unnormalized DFT, a sine of amplitude A concentrates sum |X_k|^2 =
A^2 * N * sum(w^2) / 4 in the positive-frequency bins, so band power is
divided by N * sum(w^2) / 4 before taking 10*log10.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Tuple

import numpy as np

from .exceptions import InvalidConfig
from .prescription import Audiogram, interpolate_db, interpolate_gains, nalr_gains
from .signal_core import (
    DEFAULT_STFT,
    ComplexSpectrogram,
    MagnitudeSpectrogram,
    StftConfig,
    WaveBuffer,
    istft,
    magnitude_phase,
    stft,
)

logger = logging.getLogger(__name__)

N_BANDS = 6
LEVEL_FLOOR_DB_SPL = -60.0
DEFAULT_BAND_EDGES_HZ = (0.0, 354.0, 707.0, 1414.0, 2828.0, 4899.0, 8000.0)


def _per_band(value, name: str) -> Tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),) * N_BANDS
    values = tuple(float(v) for v in value)
    if len(values) != N_BANDS:
        raise InvalidConfig(f"{name} needs {N_BANDS} values, got {len(values)}")
    return values


@dataclass(frozen=True)
class CompressorConfig:
    band_edges_hz: Tuple[float, ...] = DEFAULT_BAND_EDGES_HZ
    kneepoint_db_spl: Tuple[float, ...] = field(default=45.0)
    ratio: Tuple[float, ...] = field(default=3.0)
    attack_ms: float = 5.0
    release_ms: float = 50.0
    calib_spl_at_0_dbfs: float = 100.0

    def __post_init__(self):
        edges = tuple(float(v) for v in self.band_edges_hz)
        object.__setattr__(self, "band_edges_hz", edges)
        object.__setattr__(self, "kneepoint_db_spl", _per_band(self.kneepoint_db_spl, "kneepoint_db_spl"))
        object.__setattr__(self, "ratio", _per_band(self.ratio, "ratio"))

        if len(edges) != N_BANDS + 1:
            raise InvalidConfig(f"band_edges_hz needs {N_BANDS + 1} values, got {len(edges)}")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise InvalidConfig("band_edges_hz must be strictly ascending")
        if edges[0] != 0.0:
            raise InvalidConfig("first band edge must be 0 Hz")
        if any(r < 1.0 for r in self.ratio):
            raise InvalidConfig("compression ratio must be >= 1")
        if self.attack_ms <= 0 or self.release_ms <= 0:
            raise InvalidConfig("attack_ms and release_ms must be positive")

    def check_nyquist(self, cfg: StftConfig) -> "CompressorConfig":
        if self.band_edges_hz[-1] != cfg.sample_rate_hz / 2:
            raise InvalidConfig(f"last band edge must be the Nyquist frequency {cfg.sample_rate_hz / 2} Hz")
        return self

    def to_dict(self) -> dict:
        return {key: list(value) if isinstance(value, tuple) else value for key, value in asdict(self).items()}


@dataclass(frozen=True, eq=False)
class BandLevelTrack:
    levels_db_spl: np.ndarray  # T x N_BANDS


def bin_to_band(cfg: CompressorConfig, stft_cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Band index of every STFT bin; the Nyquist bin belongs to the last band."""
    freqs = stft_cfg.bin_frequencies()
    bands = np.searchsorted(np.asarray(cfg.band_edges_hz), freqs, side="right") - 1
    return np.clip(bands, 0, N_BANDS - 1)


def level_norm(stft_cfg: StftConfig = DEFAULT_STFT) -> float:
    return stft_cfg.fft_size * float(np.sum(stft_cfg.window**2)) / 4.0


def smoothing_coefficient(tau_ms: float, stft_cfg: StftConfig = DEFAULT_STFT) -> float:
    return float(np.exp(-stft_cfg.hop_duration_s / (tau_ms / 1000.0)))


def instantaneous_levels(mag: MagnitudeSpectrogram, cfg: CompressorConfig) -> np.ndarray:
    stft_cfg = mag.config
    cfg.check_nyquist(stft_cfg)
    band_of_bin = bin_to_band(cfg, stft_cfg)
    power = mag.frames**2
    band_power = np.stack([power[:, band_of_bin == b].sum(axis=1) for b in range(N_BANDS)], axis=1)
    with np.errstate(divide="ignore"):
        levels = cfg.calib_spl_at_0_dbfs + 10.0 * np.log10(band_power / level_norm(stft_cfg))
    return np.maximum(levels, LEVEL_FLOOR_DB_SPL)


def band_levels(mag: MagnitudeSpectrogram, cfg: CompressorConfig) -> BandLevelTrack:
    raw = instantaneous_levels(mag, cfg)
    alpha_attack = smoothing_coefficient(cfg.attack_ms, mag.config)
    alpha_release = smoothing_coefficient(cfg.release_ms, mag.config)

    smoothed = np.empty_like(raw)
    if raw.shape[0]:
        smoothed[0] = raw[0]
    for t in range(1, raw.shape[0]):
        alpha = np.where(raw[t] > smoothed[t - 1], alpha_attack, alpha_release)
        smoothed[t] = alpha * smoothed[t - 1] + (1.0 - alpha) * raw[t]
    return BandLevelTrack(np.maximum(smoothed, LEVEL_FLOOR_DB_SPL))


def static_gain_db(level_db_spl: float, kneepoint_db_spl: float, ratio: float) -> float:
    """Scalar compression curve: 0 dB below the kneepoint, slope 1/ratio above it."""
    if level_db_spl <= kneepoint_db_spl:
        return 0.0
    return -(level_db_spl - kneepoint_db_spl) * (1.0 - 1.0 / ratio)


def band_gains(levels: BandLevelTrack, cfg: CompressorConfig) -> np.ndarray:
    knee = np.asarray(cfg.kneepoint_db_spl)[None, :]
    slope = 1.0 - 1.0 / np.asarray(cfg.ratio)[None, :]
    over = np.maximum(levels.levels_db_spl - knee, 0.0)
    return -over * slope


def amplify_reference(
    wave: WaveBuffer,
    a: Audiogram,
    cfg: CompressorConfig = CompressorConfig(),
    stft_cfg: StftConfig = DEFAULT_STFT,
) -> Tuple[WaveBuffer, MagnitudeSpectrogram]:
    """NAL-R followed by WDRC. Returns the output waveform and its magnitude spectrogram."""
    spec = stft(wave.require_pipeline_rate(), stft_cfg)
    amplified = spec.frames * interpolate_gains(nalr_gains(a), stft_cfg)[None, :]

    mag = MagnitudeSpectrogram(np.abs(amplified), stft_cfg)
    gains_db = band_gains(band_levels(mag, cfg), cfg)
    bin_gains = 10.0 ** (interpolate_db(gains_db, stft_cfg) / 20.0)

    out = istft(ComplexSpectrogram(amplified * bin_gains, stft_cfg, spec.origin_len))
    target, _ = magnitude_phase(stft(out, stft_cfg))
    return out, target
