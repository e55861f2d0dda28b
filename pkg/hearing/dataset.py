"""Corpus construction: synthetic speech and noise, SNR mixing, reference targets and manifests.

A manifest is a JSON Lines file, one entry per line. Paths are stored relative
to the manifest's directory and resolved to absolute paths on load. Every
random choice is drawn from a generator seeded with derive_seed(seed, key), so
a serial and a parallel build write identical bytes.
"""

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from django.db import models

from .exceptions import InvalidAudiogram, IoFailure, MissingAudio, ShapeMismatch, SilentClean, SilentNoise, UsageError
from .prescription import Audiogram, generate_audiogram_bank, save_audiograms
from .signal_core import DEFAULT_STFT, RMS_FLOOR, SAMPLE_RATE_HZ, StftConfig, WaveBuffer, magnitude_phase, read_wav, stft, write_wav
from .wdrc import CompressorConfig, amplify_reference

logger = logging.getLogger(__name__)

TRAIN_SNRS_DB: Tuple[float, ...] = (-5.0, 0.0, 5.0)
TEST_SNRS_DB: Tuple[float, ...] = (-6.0, 0.0, 6.0)
SPEECH_RMS = 0.1
AUDIOGRAMS_FILE = "audiograms.json"
MANIFEST_FILE = "manifest.jsonl"


class Condition(models.TextChoices):
    CLEAN = "clean", "Clean"
    NOISY = "noisy", "Noisy"
    ENHANCED = "enhanced", "Enhanced"


class Split(models.TextChoices):
    TRAIN = "train", "Train"
    VAL = "val", "Validation"
    TEST = "test", "Test"


class PairingMode(models.TextChoices):
    NEUROAMP = "neuroamp", "Input and its own amplified reference"
    DENOISING = "denoising", "Noisy input and the amplified clean reference"


class NoiseKind(models.TextChoices):
    WHITE = "white", "White"
    PINK = "pink", "Pink"
    BABBLE = "babble", "Babble"


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    input_path: str
    clean_path: str
    condition: str = Condition.CLEAN
    split: str = Split.TRAIN
    target_path: str = ""
    audiogram_id: str = ""
    snr_db: Optional[float] = None
    source_id: str = ""

    @property
    def key(self) -> str:
        return f"{self.utt_id}__{self.audiogram_id}" if self.audiogram_id else self.utt_id

    def to_dict(self) -> dict:
        return {
            "utt_id": self.utt_id,
            "input_path": self.input_path,
            "target_path": self.target_path,
            "clean_path": self.clean_path,
            "audiogram_id": self.audiogram_id,
            "condition": str(self.condition),
            "snr_db": self.snr_db,
            "split": str(self.split),
            "source_id": self.source_id or self.utt_id,
        }


@dataclass(frozen=True, eq=False)
class PairedExample:
    input_logmag: np.ndarray
    target_logmag: np.ndarray
    audiogram: Audiogram
    input_phase: np.ndarray
    origin_len: int = 0
    key: str = ""


@dataclass(frozen=True, eq=False)
class Mixture:
    wave: WaveBuffer
    noise_scale: float
    peak_scale: float
    offset: int


def derive_seed(seed: int, key: str) -> int:
    digest = hashlib.sha256(f"{seed}:{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x**2))) if x.size else 0.0


# mixing -------------------------------------------------------------------------
def mix_at_snr(clean: WaveBuffer, noise: WaveBuffer, snr_db: float, seed: int) -> Mixture:
    """Add a seeded segment of `noise` to `clean` at `snr_db`, looping the noise if it is short."""
    n = len(clean)
    clean_rms = _rms(clean.samples)
    if clean_rms <= RMS_FLOOR:
        raise SilentClean(f"clean RMS {clean_rms:.3g} is at the floor")
    if len(noise) == 0:
        raise SilentNoise("noise is empty")

    rng = np.random.default_rng(seed)
    span = len(noise) - n + 1 if len(noise) >= n else len(noise)
    offset = int(rng.integers(0, span))
    segment = np.take(noise.samples, offset + np.arange(n), mode="wrap")
    noise_rms = _rms(segment)
    if noise_rms <= RMS_FLOOR:
        raise SilentNoise(f"noise segment RMS {noise_rms:.3g} is at the floor")

    noise_scale = clean_rms / noise_rms * 10.0 ** (-snr_db / 20.0)
    mixed = clean.samples + noise_scale * segment
    peak = float(np.max(np.abs(mixed)))
    peak_scale = 1.0 / peak if peak > 1.0 else 1.0
    return Mixture(WaveBuffer(mixed * peak_scale, clean.sample_rate_hz), noise_scale, peak_scale, offset)


def achieved_snr_db(clean: WaveBuffer, mixture: Mixture) -> float:
    residual = mixture.wave.samples / mixture.peak_scale - clean.samples
    return 20.0 * np.log10(_rms(clean.samples) / max(_rms(residual), RMS_FLOOR))


# synthesis ----------------------------------------------------------------------
def synth_utterance(seed: int, sample_rate_hz: int = SAMPLE_RATE_HZ) -> WaveBuffer:
    """Speech-like harmonic complex with drifting pitch and formants, 1 to 3 s long."""
    rng = np.random.default_rng(seed)
    n = int(rng.uniform(1.0, 3.0) * sample_rate_hz)
    t = np.arange(n) / sample_rate_hz
    duration = n / sample_rate_hz

    f0 = rng.uniform(100.0, 220.0) * (1.0 + 0.15 * np.sin(2 * np.pi * rng.uniform(0.3, 1.0) * t + rng.uniform(0, 2 * np.pi)))
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate_hz

    formants = np.array([rng.uniform(400, 900), rng.uniform(1000, 2200), rng.uniform(2300, 3500)])
    drift = 1.0 + 0.1 * np.sin(2 * np.pi * t[None, :] / duration + rng.uniform(0, 2 * np.pi, size=(3, 1)))
    centres = formants[:, None] * drift
    widths = np.array([120.0, 180.0, 250.0])[:, None]

    n_harmonics = int(7000 // f0.max())
    signal = np.zeros(n)
    for k in range(1, n_harmonics + 1):
        freq = k * f0
        envelope = np.exp(-0.5 * ((freq[None, :] - centres) / widths) ** 2).sum(axis=0) + 0.02
        signal += envelope * np.sin(k * phase) / k**0.5

    syllable_rate = rng.uniform(3.0, 6.0)
    am = 0.55 - 0.45 * np.cos(2 * np.pi * syllable_rate * t)
    ramp = np.minimum(1.0, np.minimum(t, duration - t) / 0.02)
    signal *= am * ramp
    return WaveBuffer(signal * SPEECH_RMS / max(_rms(signal), RMS_FLOOR), sample_rate_hz)


def synth_noise(kind: str, n_samples: int, seed: int, sample_rate_hz: int = SAMPLE_RATE_HZ) -> WaveBuffer:
    rng = np.random.default_rng(seed)
    if kind == NoiseKind.WHITE:
        noise = rng.standard_normal(n_samples)
    elif kind == NoiseKind.PINK:
        spectrum = np.fft.rfft(rng.standard_normal(n_samples))
        freqs = np.fft.rfftfreq(n_samples, d=1.0 / sample_rate_hz)
        spectrum /= np.sqrt(np.maximum(freqs, 20.0))
        noise = np.fft.irfft(spectrum, n=n_samples)
    elif kind == NoiseKind.BABBLE:
        noise = np.zeros(n_samples)
        for talker in range(6):
            voice = synth_utterance(derive_seed(seed, f"talker{talker}"), sample_rate_hz).samples
            noise += np.roll(np.resize(voice, n_samples), int(rng.integers(0, n_samples)))
    else:
        raise UsageError(f"unknown noise kind {kind!r}")
    return WaveBuffer(noise * SPEECH_RMS / max(_rms(noise), RMS_FLOOR), sample_rate_hz)


def assign_splits(source_ids: Sequence[str], seed: int, val_fraction: float = 0.1, test_fraction: float = 0.2) -> Dict[str, str]:
    """Split by source utterance; training always keeps at least one source."""
    order = np.random.default_rng(derive_seed(seed, "splits")).permutation(len(source_ids))
    n_test = min(int(round(len(source_ids) * test_fraction)), max(len(source_ids) - 1, 0))
    n_val = min(int(round(len(source_ids) * val_fraction)), max(len(source_ids) - 1 - n_test, 0))
    splits = {}
    for rank, index in enumerate(order):
        if rank < n_test:
            splits[source_ids[index]] = Split.TEST
        elif rank < n_test + n_val:
            splits[source_ids[index]] = Split.VAL
        else:
            splits[source_ids[index]] = Split.TRAIN
    return splits


def _render_source(job) -> List[ManifestEntry]:
    source_id, split, seed, out_dir, snrs = job
    out_dir = Path(out_dir)
    clean = synth_utterance(derive_seed(seed, source_id))
    clean_path = out_dir / "clean" / f"{source_id}.wav"
    write_wav(clean_path, clean)
    entries = [ManifestEntry(source_id, str(clean_path), str(clean_path), Condition.CLEAN, split, source_id=source_id)]

    kinds = NoiseKind.values
    for snr in snrs:
        utt_id = f"{source_id}_snr{int(snr):+d}"
        entry_seed = derive_seed(seed, utt_id)
        kind = kinds[entry_seed % len(kinds)]
        noise = synth_noise(kind, len(clean) + SAMPLE_RATE_HZ // 2, derive_seed(seed, f"{utt_id}:noise"))
        mixture = mix_at_snr(clean, noise, snr, entry_seed)
        noisy_path = out_dir / "noisy" / f"{utt_id}.wav"
        write_wav(noisy_path, mixture.wave)
        entries.append(ManifestEntry(utt_id, str(noisy_path), str(clean_path), Condition.NOISY, split, snr_db=float(snr), source_id=source_id))
    return entries


def run_parallel(func, jobs_list: list, jobs: int) -> list:
    if jobs <= 1 or len(jobs_list) <= 1:
        return [func(job) for job in jobs_list]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, jobs_list))


def synth_corpus(
    n_utts: int,
    seed: int,
    out_dir,
    train_snrs_db: Sequence[float] = TRAIN_SNRS_DB,
    test_snrs_db: Sequence[float] = TEST_SNRS_DB,
    n_audiograms: int = 2,
    val_fraction: float = 0.1,
    test_fraction: float = 0.2,
    jobs: int = 1,
) -> List[ManifestEntry]:
    if n_utts < 1:
        raise UsageError("n_utts must be at least 1")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"{out_dir}: {exc}") from exc

    source_ids = [f"u{index:04d}" for index in range(n_utts)]
    splits = assign_splits(source_ids, seed, val_fraction, test_fraction)
    jobs_list = [
        (sid, splits[sid], seed, str(out_dir), tuple(test_snrs_db if splits[sid] == Split.TEST else train_snrs_db))
        for sid in source_ids
    ]
    entries = [entry for group in run_parallel(_render_source, jobs_list, jobs) for entry in group]

    save_audiograms(out_dir / AUDIOGRAMS_FILE, generate_audiogram_bank(n_audiograms, seed))
    write_manifest(out_dir / MANIFEST_FILE, entries)
    logger.info("synthesized %d utterances into %d manifest entries under %s", n_utts, len(entries), out_dir)
    return entries


# reference targets --------------------------------------------------------------
def _render_target(job) -> None:
    source_path, target_path, audiogram, cfg = job
    out, _ = amplify_reference(read_wav(source_path), audiogram, cfg)
    write_wav(target_path, out)


def assign_audiograms(entries: Sequence[ManifestEntry], bank: Sequence[Audiogram], k: int = 2) -> List[Tuple[ManifestEntry, Audiogram]]:
    """Pair every entry with k audiograms, round-robin over the bank per source utterance."""
    if not bank:
        raise InvalidAudiogram("audiogram bank is empty")
    by_id = {a.id: a for a in bank}
    sources: Dict[str, int] = {}
    pairs = []
    for entry in entries:
        if entry.audiogram_id:
            if entry.audiogram_id not in by_id:
                raise InvalidAudiogram(f"{entry.utt_id}: unknown audiogram {entry.audiogram_id!r}")
            pairs.append((entry, by_id[entry.audiogram_id]))
            continue
        source_index = sources.setdefault(entry.source_id or entry.utt_id, len(sources))
        for j in range(min(k, len(bank))):
            pairs.append((entry, bank[(source_index * k + j) % len(bank)]))
    return pairs


def build_targets(
    entries: Sequence[ManifestEntry],
    audiograms: Sequence[Audiogram],
    cfg: CompressorConfig = CompressorConfig(),
    out_dir=None,
    mode: str = PairingMode.NEUROAMP,
    k: int = 2,
    jobs: int = 1,
) -> List[ManifestEntry]:
    """Write amplify_reference targets; returns one manifest row per (entry, audiogram)."""
    if mode not in PairingMode.values:
        raise UsageError(f"unknown pairing mode {mode!r}")
    if not entries:
        raise UsageError("manifest has no entries")
    missing = [p for e in entries for p in (e.clean_path, e.input_path) if not Path(p).is_file()]
    if missing:
        raise MissingAudio(f"{len(missing)} referenced files are missing, first: {missing[0]}")

    pairs = assign_audiograms(entries, audiograms, k)
    target_dir = Path(out_dir) if out_dir is not None else Path(entries[0].clean_path).parent.parent / "target"
    updated, jobs_list = [], []
    for entry, audiogram in pairs:
        target_path = target_dir / f"{entry.utt_id}__{audiogram.id}.wav"
        source = entry.clean_path if mode == PairingMode.DENOISING else entry.input_path
        jobs_list.append((source, str(target_path), audiogram, cfg))
        updated.append(replace(entry, audiogram_id=audiogram.id, target_path=str(target_path), source_id=entry.source_id or entry.utt_id))

    run_parallel(_render_target, jobs_list, jobs)
    logger.info("built %d %s targets in %s", len(updated), mode, target_dir)
    return updated


# features -----------------------------------------------------------------------
def logmag_features(wave: WaveBuffer, cfg: StftConfig = DEFAULT_STFT) -> Tuple[np.ndarray, np.ndarray, int]:
    spec = stft(wave.require_pipeline_rate(), cfg)
    mag, phase = magnitude_phase(spec)
    return np.log1p(mag.frames), phase, spec.origin_len


def load_pair(entry: ManifestEntry, audiograms: Dict[str, Audiogram], cfg: StftConfig = DEFAULT_STFT) -> PairedExample:
    if not entry.target_path:
        raise MissingAudio(f"{entry.utt_id}: no target; run build_targets first")
    if entry.audiogram_id not in audiograms:
        raise InvalidAudiogram(f"{entry.utt_id}: unknown audiogram {entry.audiogram_id!r}")
    for path in (entry.input_path, entry.target_path):
        if not Path(path).is_file():
            raise MissingAudio(f"{entry.utt_id}: {path} does not exist")

    input_logmag, phase, origin_len = logmag_features(read_wav(entry.input_path), cfg)
    target_logmag, _, _ = logmag_features(read_wav(entry.target_path), cfg)
    if input_logmag.shape != target_logmag.shape:
        raise ShapeMismatch(f"{entry.key}: input has {input_logmag.shape[0]} frames, target {target_logmag.shape[0]}")
    return PairedExample(input_logmag, target_logmag, audiograms[entry.audiogram_id], phase, origin_len, entry.key)


# manifest IO --------------------------------------------------------------------
def select_split(entries: Iterable[ManifestEntry], split: str) -> List[ManifestEntry]:
    return [e for e in entries if e.split == split]


def write_manifest(path, entries: Iterable[ManifestEntry]) -> None:
    path = Path(path)
    root = path.parent.resolve()

    def relative(p: str) -> str:
        return Path(os.path.relpath(Path(p).resolve(), root)).as_posix() if p else ""

    lines = []
    for entry in entries:
        row = entry.to_dict()
        for key in ("input_path", "target_path", "clean_path"):
            row[key] = relative(row[key])
        lines.append(json.dumps(row, sort_keys=True))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def read_manifest(path) -> List[ManifestEntry]:
    from .serializers import ManifestEntrySerializer

    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc

    root = path.parent.resolve()
    entries = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IoFailure(f"{path}:{number}: {exc}") from exc
        serializer = ManifestEntrySerializer(data=data)
        if not serializer.is_valid():
            raise IoFailure(f"{path}:{number}: {dict(serializer.errors)}")
        entry = serializer.save()
        entries.append(replace(
            entry,
            input_path=str(root / entry.input_path),
            clean_path=str(root / entry.clean_path),
            target_path=str(root / entry.target_path) if entry.target_path else "",
        ))
    return entries
