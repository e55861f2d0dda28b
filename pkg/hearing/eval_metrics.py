"""Score statistics, spectral-fidelity proxies and the band-energy and gain analyses.

Per-utterance proxy scores (log-spectral distance, segmental SNR and
band-energy MSE) are computed for a reference system and a test system
against a shared anchor signal. The summary compares the two score
populations the same way listening-model scores are compared: linear and
rank correlation plus mean squared difference.
"""

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .exceptions import DegenerateVariance, IoFailure, ScoreMismatch, ShapeMismatch
from .prescription import AUDIOGRAM_FREQUENCIES_HZ
from .signal_core import DEFAULT_STFT, MagnitudeSpectrogram, StftConfig, WaveBuffer, magnitude_phase, stft

logger = logging.getLogger(__name__)

LSD_EPS = 1e-8
ENERGY_FLOOR_DB = -120.0
BAND_NAMES = ("low", "mid", "high")
BAND_EDGES_HZ = (0.0, 500.0, 2000.0)
SEG_FRAME = 512
SEG_HOP = 256
SEG_SNR_RANGE_DB = (-10.0, 35.0)
SILENT_FRAME_RMS = 1e-5
PROXIES = ("lsd_db", "seg_snr_db", "band_energy_mse")


@dataclass(frozen=True, eq=False)
class ScoreVector:
    utt_ids: Tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "utt_ids", tuple(self.utt_ids))
        object.__setattr__(self, "scores", scores)
        if len(self.utt_ids) != scores.size:
            raise ScoreMismatch(f"{len(self.utt_ids)} ids for {scores.size} scores")
        if np.any(np.isnan(scores)):
            raise ScoreMismatch("scores contain NaN")

    @classmethod
    def of(cls, scores: Sequence[float]) -> "ScoreVector":
        return cls(tuple(str(i) for i in range(len(scores))), np.asarray(scores, dtype=np.float64))


def _aligned(x: ScoreVector, y: ScoreVector, min_len: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    if x.utt_ids != y.utt_ids:
        raise ScoreMismatch("score vectors are not aligned on utt_id")
    if x.scores.size < min_len:
        raise ScoreMismatch(f"need at least {min_len} scores, got {x.scores.size}")
    return x.scores, y.scores


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = float(np.dot(da, da)), float(np.dot(db, db))
    if saa == 0.0 or sbb == 0.0:
        raise DegenerateVariance("one score population has zero variance")
    return float(np.clip(np.dot(da, db) / np.sqrt(saa * sbb), -1.0, 1.0))


def lcc(x: ScoreVector, y: ScoreVector) -> float:
    return _pearson(*_aligned(x, y, 2))


def srcc(x: ScoreVector, y: ScoreVector) -> float:
    """Spearman correlation: Pearson of average ranks."""
    a, b = _aligned(x, y, 2)
    return _pearson(stats.rankdata(a, method="average"), stats.rankdata(b, method="average"))


def mse_scores(x: ScoreVector, y: ScoreVector) -> float:
    a, b = _aligned(x, y)
    return float(np.mean((a - b) ** 2))


def pearson_ci(r: float, n: int, level: float = 0.95) -> Tuple[float, float]:
    """Fisher-z confidence interval for a correlation from n pairs."""
    if n <= 3:
        return -1.0, 1.0
    z = np.arctanh(np.clip(r, -1.0 + 1e-15, 1.0 - 1e-15))
    half = stats.norm.ppf(0.5 + level / 2.0) / np.sqrt(n - 3)
    return float(np.tanh(z - half)), float(np.tanh(z + half))


def spearman_ci(rho: float, n: int, level: float = 0.95) -> Tuple[float, float]:
    """Fisher-z interval for a rank correlation, with the 1.06 / (n - 3) variance for ranks."""
    if n <= 3:
        return -1.0, 1.0
    z = np.arctanh(np.clip(rho, -1.0 + 1e-15, 1.0 - 1e-15))
    half = stats.norm.ppf(0.5 + level / 2.0) * np.sqrt(1.06 / (n - 3))
    return float(np.tanh(z - half)), float(np.tanh(z + half))


def mse_ci(x: ScoreVector, y: ScoreVector, level: float = 0.95) -> Tuple[float, float]:
    """Student-t interval on the mean squared difference, lower end clamped at zero."""
    a, b = _aligned(x, y)
    squared = (a - b) ** 2
    mean = float(squared.mean())
    if squared.size < 2:
        return mean, mean
    half = stats.t.ppf(0.5 + level / 2.0, squared.size - 1) * squared.std(ddof=1) / np.sqrt(squared.size)
    return max(0.0, mean - float(half)), mean + float(half)


def paired_t_test(x: ScoreVector, y: ScoreVector) -> float:
    a, b = _aligned(x, y, 2)
    if np.all(a == b):
        return 1.0
    return float(stats.ttest_rel(a, b).pvalue)


# spectral proxies --------------------------------------------------------------
def log_spectral_distance(a: MagnitudeSpectrogram, b: MagnitudeSpectrogram) -> float:
    if a.frames.shape != b.frames.shape:
        raise ShapeMismatch(f"spectrogram shapes differ: {a.frames.shape} vs {b.frames.shape}")
    ratio_db = 20.0 * np.log10((a.frames + LSD_EPS) / (b.frames + LSD_EPS))
    return float(np.mean(np.sqrt(np.mean(ratio_db**2, axis=1))))


@dataclass(frozen=True, eq=False)
class BandEnergyTrack:
    low: np.ndarray
    mid: np.ndarray
    high: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.stack([self.low, self.mid, self.high], axis=1)


def band_bins(cfg: StftConfig = DEFAULT_STFT) -> List[np.ndarray]:
    freqs = cfg.bin_frequencies()
    band = np.searchsorted(np.asarray(BAND_EDGES_HZ), freqs, side="right") - 1
    return [np.flatnonzero(band == index) for index in range(len(BAND_NAMES))]


def band_energy(mag: MagnitudeSpectrogram) -> BandEnergyTrack:
    power = mag.frames**2
    tracks = []
    for bins in band_bins(mag.config):
        with np.errstate(divide="ignore"):
            tracks.append(np.maximum(10.0 * np.log10(power[:, bins].sum(axis=1)), ENERGY_FLOOR_DB))
    return BandEnergyTrack(*tracks)


def band_energy_mse(a: MagnitudeSpectrogram, b: MagnitudeSpectrogram) -> float:
    if a.frames.shape != b.frames.shape:
        raise ShapeMismatch(f"spectrogram shapes differ: {a.frames.shape} vs {b.frames.shape}")
    return float(np.mean((band_energy(a).as_array() - band_energy(b).as_array()) ** 2))


def seg_snr_db(reference: WaveBuffer, test: WaveBuffer) -> float:
    """Mean per-frame SNR of `test` against `reference`, frames clamped to [-10, 35] dB."""
    if len(reference) != len(test):
        raise ShapeMismatch(f"lengths differ: {len(reference)} vs {len(test)}")
    ref, err = reference.samples, reference.samples - test.samples
    frame = min(SEG_FRAME, ref.size)
    starts = range(0, max(ref.size - frame, 0) + 1, SEG_HOP)
    low, high = SEG_SNR_RANGE_DB

    values = []
    for start in starts:
        r, e = ref[start : start + frame], err[start : start + frame]
        if np.sqrt(np.mean(r**2)) < SILENT_FRAME_RMS:
            continue
        noise = float(np.sum(e**2))
        snr = high if noise == 0.0 else 10.0 * np.log10(np.sum(r**2) / noise)
        values.append(np.clip(snr, low, high))
    if not values:
        return high if not np.any(err) else low
    return float(np.mean(values))


def effective_gain(in_wave: WaveBuffer, out_wave: WaveBuffer, cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Long-term output minus input level (dB) in third-octave neighbourhoods of the audiogram frequencies."""
    if len(in_wave) != len(out_wave):
        raise ShapeMismatch(f"lengths differ: {len(in_wave)} vs {len(out_wave)}")
    p_in = np.mean(np.abs(stft(in_wave, cfg).frames) ** 2, axis=0)
    p_out = np.mean(np.abs(stft(out_wave, cfg).frames) ** 2, axis=0)
    freqs = cfg.bin_frequencies()

    gains = []
    for f in AUDIOGRAM_FREQUENCIES_HZ:
        bins = np.flatnonzero((freqs >= f * 2 ** (-1 / 6)) & (freqs <= f * 2 ** (1 / 6)))
        if bins.size == 0:
            bins = np.array([int(np.argmin(np.abs(freqs - f)))])
        gains.append(10.0 * np.log10(max(p_out[bins].sum(), 1e-30) / max(p_in[bins].sum(), 1e-30)))
    return np.asarray(gains)


# reports ------------------------------------------------------------------------
@dataclass(frozen=True)
class EvalRow:
    utt_id: str
    condition: str
    system: str
    lsd_db: float
    seg_snr_db: float
    band_energy_mse: float


def proxy_scores(anchor: WaveBuffer, wave: WaveBuffer, cfg: StftConfig = DEFAULT_STFT) -> Dict[str, float]:
    if len(anchor) != len(wave):
        raise ShapeMismatch(f"lengths differ: {len(anchor)} vs {len(wave)}")
    anchor_mag, _ = magnitude_phase(stft(anchor, cfg))
    wave_mag, _ = magnitude_phase(stft(wave, cfg))
    return {
        "lsd_db": log_spectral_distance(anchor_mag, wave_mag),
        "seg_snr_db": seg_snr_db(anchor, wave),
        "band_energy_mse": band_energy_mse(anchor_mag, wave_mag),
    }


def score_rows(
    utt_id: str, condition: str, reference: WaveBuffer, test: WaveBuffer, anchor: Optional[WaveBuffer] = None
) -> List[EvalRow]:
    anchor = reference if anchor is None else anchor
    return [
        EvalRow(utt_id, condition, system, **proxy_scores(anchor, wave))
        for system, wave in (("reference", reference), ("test", test))
    ]


def _population_stats(ref: ScoreVector, test: ScoreVector, strict: bool) -> dict:
    try:
        r, rho = lcc(ref, test), srcc(ref, test)
        result = {
            "lcc": r,
            "srcc": rho,
            "lcc_ci95": list(pearson_ci(r, ref.scores.size)),
            "srcc_ci95": list(spearman_ci(rho, ref.scores.size)),
        }
    except (DegenerateVariance, ScoreMismatch):
        if strict:
            raise
        result = {"lcc": None, "srcc": None, "lcc_ci95": None, "srcc_ci95": None}
    result.update(
        n=int(ref.scores.size),
        mse=mse_scores(ref, test),
        mse_ci95=list(mse_ci(ref, test)),
        reference_mean=float(ref.scores.mean()),
        reference_std=float(ref.scores.std()),
        test_mean=float(test.scores.mean()),
        test_std=float(test.scores.std()),
        paired_t_p=paired_t_test(ref, test) if ref.scores.size >= 2 else None,
    )
    return result


def summarize(rows: Iterable[EvalRow], strict: bool = True) -> dict:
    """Reference-vs-test statistics per proxy, overall and per condition.

    Overall correlations raise on degenerate populations unless `strict` is
    off, in which case they are reported as None like the per-condition ones.
    """
    by_system: Dict[str, Dict[str, EvalRow]] = {"reference": {}, "test": {}}
    for row in rows:
        by_system[row.system][row.utt_id] = row
    if set(by_system["reference"]) != set(by_system["test"]):
        raise ScoreMismatch("reference and test rows cover different utterances")
    utt_ids = sorted(by_system["reference"])
    conditions = sorted({by_system["reference"][u].condition for u in utt_ids})

    def vectors(proxy: str, ids: Sequence[str]) -> Tuple[ScoreVector, ScoreVector]:
        return tuple(
            ScoreVector(tuple(ids), [getattr(by_system[system][u], proxy) for u in ids])
            for system in ("reference", "test")
        )

    summary = {}
    for proxy in PROXIES:
        entry = _population_stats(*vectors(proxy, utt_ids), strict=strict)
        entry["per_condition"] = {
            condition: _population_stats(
                *vectors(proxy, [u for u in utt_ids if by_system["reference"][u].condition == condition]), strict=False
            )
            for condition in conditions
        }
        summary[proxy] = entry
    return summary


@dataclass(eq=False)
class EvalReport:
    rows: List[EvalRow]
    summary: dict

    @classmethod
    def from_rows(cls, rows: Iterable[EvalRow], strict: bool = True) -> "EvalReport":
        rows = sorted(rows, key=lambda r: (r.utt_id, r.system))
        return cls(rows, summarize(rows, strict=strict))


# files ------------------------------------------------------------------------------
def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def write_rows(path, rows: Sequence[EvalRow]) -> None:
    header = list(EvalRow.__dataclass_fields__)
    write_csv(path, header, ([asdict(row)[key] for key in header] for row in rows))


def write_summary(path, summary: dict) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def read_rows(path) -> List[EvalRow]:
    try:
        with Path(path).open(newline="", encoding="utf-8") as fh:
            return [
                EvalRow(r["utt_id"], r["condition"], r["system"], float(r["lsd_db"]), float(r["seg_snr_db"]), float(r["band_energy_mse"]))
                for r in csv.DictReader(fh)
            ]
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
