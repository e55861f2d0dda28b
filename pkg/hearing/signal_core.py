"""Waveform and time-frequency plumbing shared by every other module.

Conventions:
  - 16 kHz mono audio; samples are float64 in [-1, 1].
  - Forward DFT unnormalized, inverse scaled by 1/N (numpy's rfft/irfft).
  - 512-point frames, symmetric Hamming window, hop 256.
  - Analysis reflect-pads win_len/2 samples at both ends; synthesis is a
    weighted overlap-add normalized by the summed squared window and then
    truncated back to the original length.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy.io import wavfile

from .exceptions import (
    DegenerateWindowSum,
    EmptyAudio,
    InvalidAudio,
    IoFailure,
    MalformedContainer,
    TooShort,
    UnsupportedEncoding,
)

logger = logging.getLogger(__name__)

SAMPLE_RATE_HZ = 16000
PCM16_SCALE = 32768.0
RMS_FLOOR = 1e-10
WINDOW_SUM_FLOOR = 1e-8

PathLike = Union[str, Path]


def hamming(n: int) -> np.ndarray:
    """Symmetric Hamming window, w[k] = 0.54 - 0.46 cos(2 pi k / (n - 1))."""
    return np.hamming(n)


def clip_and_count(samples: np.ndarray) -> Tuple[np.ndarray, int]:
    clipped = int(np.count_nonzero(np.abs(samples) > 1.0))
    return np.clip(samples, -1.0, 1.0), clipped


@dataclass(frozen=True, eq=False)
class WaveBuffer:
    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE_HZ
    clip_count: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate_hz <= 0:
            raise InvalidAudio(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise InvalidAudio("waveform contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def require_pipeline_rate(self) -> "WaveBuffer":
        if self.sample_rate_hz != SAMPLE_RATE_HZ:
            raise InvalidAudio(
                f"expected {SAMPLE_RATE_HZ} Hz audio, got {self.sample_rate_hz} Hz (resampling is not supported)"
            )
        return self


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    win_len: int = 512
    hop: int = 256
    sample_rate_hz: int = SAMPLE_RATE_HZ
    window: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.fft_size != self.win_len:
            raise InvalidAudio("fft_size must equal win_len")
        if self.hop * 2 != self.win_len:
            raise InvalidAudio("hop must be win_len / 2")
        if self.window is None:
            object.__setattr__(self, "window", hamming(self.win_len))

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def hop_duration_s(self) -> float:
        return self.hop / self.sample_rate_hz

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.sample_rate_hz / self.fft_size


@dataclass(frozen=True, eq=False)
class ComplexSpectrogram:
    frames: np.ndarray  # T x n_bins complex
    config: StftConfig
    origin_len: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def validate(self) -> "ComplexSpectrogram":
        if self.frames.ndim != 2 or self.frames.shape[1] != self.config.n_bins:
            raise InvalidAudio(f"spectrogram must be T x {self.config.n_bins}, got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise InvalidAudio("spectrogram contains non-finite values")
        scale = max(1.0, float(np.max(np.abs(self.frames), initial=0.0)))
        edges = self.frames[:, [0, -1]].imag
        if np.any(np.abs(edges) > 1e-9 * scale):
            raise InvalidAudio("DC and Nyquist bins must have zero imaginary part")
        return self


@dataclass(frozen=True, eq=False)
class MagnitudeSpectrogram:
    frames: np.ndarray  # T x n_bins, nonnegative
    config: StftConfig

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "frames", frames)
        if not np.all(np.isfinite(frames)) or np.any(frames < 0):
            raise InvalidAudio("magnitudes must be finite and nonnegative")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


DEFAULT_STFT = StftConfig()


def read_wav(path: PathLike) -> WaveBuffer:
    path = Path(path)
    if not path.is_file():
        raise IoFailure(f"{path}: no such file")
    try:
        rate, data = wavfile.read(path)
    except (ValueError, EOFError) as exc:
        raise MalformedContainer(f"{path}: {exc}") from exc
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc

    if data.dtype != np.int16:
        raise UnsupportedEncoding(f"{path}: expected PCM 16-bit, got {data.dtype}")
    if data.ndim != 1:
        raise UnsupportedEncoding(f"{path}: expected mono, got {data.shape[1]} channels")
    if rate != SAMPLE_RATE_HZ:
        raise UnsupportedEncoding(f"{path}: expected {SAMPLE_RATE_HZ} Hz, got {rate} Hz")
    if data.size == 0:
        raise EmptyAudio(f"{path}: no samples")
    return WaveBuffer(data.astype(np.float64) / PCM16_SCALE, rate)


def write_wav(path: PathLike, wave: WaveBuffer) -> int:
    """Write 16-bit PCM; returns the number of samples clipped to full scale."""
    samples, clipped = clip_and_count(wave.samples)
    if clipped:
        logger.warning("%s: clipped %d samples to full scale", path, clipped)
    pcm = np.clip(np.round(samples * PCM16_SCALE), -PCM16_SCALE, PCM16_SCALE - 1).astype(np.int16)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        wavfile.write(path, wave.sample_rate_hz, pcm)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    return clipped


def stft(wave: WaveBuffer, cfg: StftConfig = DEFAULT_STFT) -> ComplexSpectrogram:
    samples = wave.samples
    pad = cfg.win_len // 2
    if samples.size == 0:
        raise TooShort("cannot frame an empty waveform")
    # numpy reflects repeatedly when pad exceeds the signal length
    padded = np.pad(samples, pad, mode="reflect")
    n_frames = (padded.size - cfg.win_len) // cfg.hop + 1
    idx = np.arange(cfg.win_len)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = np.fft.rfft(padded[idx] * cfg.window[None, :], n=cfg.fft_size, axis=1)
    # real input: DC and Nyquist are real up to rounding
    frames[:, 0] = frames[:, 0].real
    frames[:, -1] = frames[:, -1].real
    return ComplexSpectrogram(frames, cfg, samples.size)


def istft(spec: ComplexSpectrogram) -> WaveBuffer:
    spec.validate()
    cfg = spec.config
    pad = cfg.win_len // 2
    n_frames = spec.n_frames
    total = (n_frames - 1) * cfg.hop + cfg.win_len

    chunks = np.fft.irfft(spec.frames, n=cfg.fft_size, axis=1)[:, : cfg.win_len] * cfg.window[None, :]
    out = np.zeros(total)
    norm = np.zeros(total)
    win_sq = cfg.window**2
    for t in range(n_frames):
        start = t * cfg.hop
        out[start : start + cfg.win_len] += chunks[t]
        norm[start : start + cfg.win_len] += win_sq

    region = slice(pad, pad + spec.origin_len)
    out, norm = out[region], norm[region]
    if out.size < spec.origin_len or np.any(norm < WINDOW_SUM_FLOOR):
        raise DegenerateWindowSum("window normalizer vanishes inside the output region")
    samples, clipped = clip_and_count(out / norm)
    if clipped:
        logger.warning("istft clipped %d samples", clipped)
    return WaveBuffer(samples, cfg.sample_rate_hz, clip_count=clipped)


def magnitude_phase(spec: ComplexSpectrogram) -> Tuple[MagnitudeSpectrogram, np.ndarray]:
    magnitude = np.abs(spec.frames)
    phase = np.angle(spec.frames)  # angle(0) == 0
    return MagnitudeSpectrogram(magnitude, spec.config), phase


def recombine(mag: MagnitudeSpectrogram, phase: np.ndarray, origin_len: int) -> ComplexSpectrogram:
    frames = mag.frames * np.exp(1j * phase)
    frames[:, 0] = frames[:, 0].real
    frames[:, -1] = frames[:, -1].real
    return ComplexSpectrogram(frames, mag.config, origin_len)


def rms_db(wave: WaveBuffer) -> float:
    if len(wave) == 0:
        raise EmptyAudio("rms of an empty waveform")
    rms = float(np.sqrt(np.mean(wave.samples**2)))
    return 20.0 * np.log10(max(rms, RMS_FLOOR))
