"""Audiograms, hearing-loss pattern generation and the NAL-R linear prescription.

NAL-R insertion gain at audiometric frequency f (Byrne & Dillon constants):

    X     = 0.05 * (H500 + H1000 + H2000)
    G(f)  = X + 0.31 * H(f) + C(f)

    f (Hz)   250   500   1000   2000   4000   6000
    C (dB)   -17    -8     +1     -1     -2     -2

Negative gains are clamped to 0 dB.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from django.db import models

from .exceptions import InvalidAudiogram
from .signal_core import DEFAULT_STFT, ComplexSpectrogram, StftConfig, WaveBuffer, istft, stft

logger = logging.getLogger(__name__)

AUDIOGRAM_FREQUENCIES_HZ: Tuple[int, ...] = (250, 500, 1000, 2000, 4000, 6000)
NALR_CORRECTIONS_DB: Tuple[float, ...] = (-17.0, -8.0, 1.0, -1.0, -2.0, -2.0)
MAX_THRESHOLD_DB_HL = 120.0
MAX_GAIN_DB = 80.0
PTA_INDICES = (1, 2, 3)  # 500, 1000, 2000 Hz


class LossShape(models.TextChoices):
    FLAT = "flat", "Flat"
    GENTLY_SLOPING = "gently_sloping", "Gently sloping"
    STEEPLY_SLOPING = "steeply_sloping", "Steeply sloping"
    RISING = "rising", "Rising"
    NOTCHED = "notched", "Notched"


class Severity(models.TextChoices):
    MILD = "mild", "Mild"
    MODERATE = "moderate", "Moderate"
    MODERATELY_SEVERE = "moderately_severe", "Moderately severe"
    SEVERE = "severe", "Severe"


SEVERITY_PTA_BANDS: Dict[str, Tuple[float, float]] = {
    Severity.MILD: (26.0, 40.0),
    Severity.MODERATE: (41.0, 55.0),
    Severity.MODERATELY_SEVERE: (56.0, 70.0),
    Severity.SEVERE: (71.0, 90.0),
}


@dataclass(frozen=True)
class Audiogram:
    """Hearing thresholds (dB HL) at AUDIOGRAM_FREQUENCIES_HZ."""

    thresholds_db_hl: Tuple[float, ...]
    id: str = "audiogram"

    def __post_init__(self):
        thresholds = tuple(float(v) for v in self.thresholds_db_hl)
        if len(thresholds) != len(AUDIOGRAM_FREQUENCIES_HZ):
            raise InvalidAudiogram(f"{self.id}: expected 6 thresholds, got {len(thresholds)}")
        for freq, value in zip(AUDIOGRAM_FREQUENCIES_HZ, thresholds):
            if not np.isfinite(value) or not 0.0 <= value <= MAX_THRESHOLD_DB_HL:
                raise InvalidAudiogram(f"{self.id}: threshold {value} at {freq} Hz outside [0, 120] dB HL")
        object.__setattr__(self, "thresholds_db_hl", thresholds)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.thresholds_db_hl, dtype=np.float64)

    def to_dict(self) -> dict:
        return {"id": self.id, "thresholds_db_hl": list(self.thresholds_db_hl)}

    @classmethod
    def from_dict(cls, data: dict) -> "Audiogram":
        from .serializers import AudiogramSerializer

        serializer = AudiogramSerializer(data=data)
        if not serializer.is_valid():
            raise InvalidAudiogram(f"invalid audiogram: {dict(serializer.errors)}")
        return serializer.save()


@dataclass(frozen=True)
class HearingLossPattern:
    shape: str = LossShape.FLAT
    severity: str = Severity.MILD
    jitter_db: float = 0.0

    def __post_init__(self):
        if self.shape not in LossShape.values:
            raise InvalidAudiogram(f"unknown loss shape {self.shape!r}")
        if self.severity not in Severity.values:
            raise InvalidAudiogram(f"unknown severity {self.severity!r}")
        if self.jitter_db < 0:
            raise InvalidAudiogram("jitter_db must be nonnegative")


@dataclass(frozen=True)
class GainCurve:
    gains_db: Tuple[float, ...]

    def __post_init__(self):
        gains = tuple(float(v) for v in self.gains_db)
        if len(gains) != len(AUDIOGRAM_FREQUENCIES_HZ):
            raise InvalidAudiogram(f"expected 6 gains, got {len(gains)}")
        if any(not 0.0 <= g <= MAX_GAIN_DB for g in gains):
            raise InvalidAudiogram(f"gains must lie in [0, {MAX_GAIN_DB}] dB, got {gains}")
        object.__setattr__(self, "gains_db", gains)

    @classmethod
    def flat(cls, gain_db: float) -> "GainCurve":
        return cls((gain_db,) * len(AUDIOGRAM_FREQUENCIES_HZ))


def pure_tone_average(a: Audiogram) -> float:
    return float(np.mean(a.as_array()[list(PTA_INDICES)]))


def classify_severity(pta_db_hl: float) -> str:
    """Severity band for a pure-tone average; values below the mild band map to mild."""
    for severity, (_, high) in SEVERITY_PTA_BANDS.items():
        if pta_db_hl <= high:
            return severity
    return Severity.SEVERE


def nalr_gains(a: Audiogram) -> GainCurve:
    h = a.as_array()
    x = 0.05 * h[list(PTA_INDICES)].sum()
    raw = x + 0.31 * h + np.asarray(NALR_CORRECTIONS_DB)
    return GainCurve(tuple(np.maximum(raw, 0.0)))


def interpolate_db(anchor_db: np.ndarray, cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Piecewise-linear interpolation over log-frequency from the six anchors to every bin.

    `anchor_db` is (..., 6); the result is (..., n_bins) in dB. Bins below 250 Hz
    hold the 250 Hz value, bins above 6000 Hz hold the 6000 Hz value.
    """
    anchor_db = np.asarray(anchor_db, dtype=np.float64)
    log_anchor = np.log2(np.asarray(AUDIOGRAM_FREQUENCIES_HZ, dtype=np.float64))
    freqs = np.maximum(cfg.bin_frequencies(), AUDIOGRAM_FREQUENCIES_HZ[0])
    log_bins = np.log2(freqs)

    # fractional position of each bin between its two neighbouring anchors
    upper = np.clip(np.searchsorted(log_anchor, log_bins, side="right"), 1, len(log_anchor) - 1)
    lower = upper - 1
    frac = (log_bins - log_anchor[lower]) / (log_anchor[upper] - log_anchor[lower])
    frac = np.clip(frac, 0.0, 1.0)
    return anchor_db[..., lower] * (1.0 - frac) + anchor_db[..., upper] * frac


def interpolate_gains(g: GainCurve, cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Per-bin linear gain factors for a prescription gain curve."""
    return 10.0 ** (interpolate_db(np.asarray(g.gains_db), cfg) / 20.0)


def _template_offsets(shape: str) -> np.ndarray:
    octaves_from_1k = np.log2(np.asarray(AUDIOGRAM_FREQUENCIES_HZ, dtype=np.float64) / 1000.0)
    if shape == LossShape.FLAT:
        return np.zeros(len(AUDIOGRAM_FREQUENCIES_HZ))
    if shape == LossShape.GENTLY_SLOPING:
        return 5.0 * np.maximum(octaves_from_1k, 0.0)
    if shape == LossShape.STEEPLY_SLOPING:
        return 15.0 * np.maximum(octaves_from_1k, 0.0)
    if shape == LossShape.RISING:
        return -5.0 * octaves_from_1k
    # notched: +25 dB bump at 4 kHz over a flat base
    offsets = np.zeros(len(AUDIOGRAM_FREQUENCIES_HZ))
    offsets[AUDIOGRAM_FREQUENCIES_HZ.index(4000)] = 25.0
    return offsets


def generate_audiogram(p: HearingLossPattern, seed: int, audiogram_id: str = "") -> Audiogram:
    rng = np.random.default_rng(seed)
    offsets = _template_offsets(p.shape)
    pta_offset = offsets[list(PTA_INDICES)].mean()

    # keep the un-jittered template inside [0, 120] so the PTA lands in the band exactly
    low, high = SEVERITY_PTA_BANDS[p.severity]
    low = max(low, pta_offset - offsets.min())
    high = min(high, MAX_THRESHOLD_DB_HL - (offsets.max() - pta_offset))
    target_pta = rng.uniform(low, high) if high > low else low

    thresholds = target_pta - pta_offset + offsets
    if p.jitter_db > 0:
        thresholds = thresholds + rng.uniform(-p.jitter_db, p.jitter_db, size=thresholds.size)
    thresholds = np.clip(thresholds, 0.0, MAX_THRESHOLD_DB_HL)
    return Audiogram(tuple(thresholds), audiogram_id or f"{p.shape}_{p.severity}_{seed}")


def generate_audiogram_bank(n: int, seed: int, jitter_db: float = 5.0) -> List[Audiogram]:
    """n audiograms cycling through shape x severity combinations."""
    combos = [(shape, severity) for severity in Severity.values for shape in LossShape.values]
    bank = []
    for index in range(n):
        shape, severity = combos[(index * 7) % len(combos)]
        pattern = HearingLossPattern(shape, severity, jitter_db)
        bank.append(generate_audiogram(pattern, seed * 1000 + index, f"hl{index:03d}_{shape}_{severity}"))
    return bank


def apply_linear_gain(wave: WaveBuffer, g: GainCurve, cfg: StftConfig = DEFAULT_STFT) -> WaveBuffer:
    spec = stft(wave.require_pipeline_rate(), cfg)
    factors = interpolate_gains(g, cfg)
    return istft(ComplexSpectrogram(spec.frames * factors[None, :], spec.config, spec.origin_len))


def load_audiograms(path) -> List[Audiogram]:
    """Read a single audiogram object or a JSON array of them."""
    from .serializers import AudiogramSerializer

    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidAudiogram(f"{path}: {exc}") from exc
    many = isinstance(data, list)
    serializer = AudiogramSerializer(data=data, many=many)
    if not serializer.is_valid():
        raise InvalidAudiogram(f"{path}: {serializer.errors}")
    result = serializer.save()
    audiograms = list(result) if many else [result]
    ids = [a.id for a in audiograms]
    if len(set(ids)) != len(ids):
        raise InvalidAudiogram(f"{path}: duplicate audiogram ids")
    return audiograms


def save_audiograms(path, audiograms: Iterable[Audiogram]) -> None:
    payload = [a.to_dict() for a in audiograms]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def audiograms_by_id(audiograms: Sequence[Audiogram]) -> Dict[str, Audiogram]:
    return {a.id: a for a in audiograms}
