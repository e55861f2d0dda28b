"""Orchestration behind the management commands.

Each function reads its inputs, delegates to one module operation and writes
the outputs; the commands only parse flags and report.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings
from django.db import models, transaction

from . import eval_metrics
from .config import RunConfig, write_resolved
from .dataset import (
    AUDIOGRAMS_FILE,
    Condition,
    ManifestEntry,
    Mixture,
    Split,
    build_targets,
    mix_at_snr,
    read_manifest,
    run_parallel,
    select_split,
    synth_corpus,
    write_manifest,
)
from .exceptions import EmptySplit, InvalidAudiogram, InvalidConfig, MissingAudio, ScoreMismatch
from .models import EpochRecord, TrainingRun
from .neuro_amp import (
    SCALE_PRESETS,
    AmpModel,
    ModelConfig,
    TrainResult,
    count_parameters,
    infer,
    infer_manifest,
    load_model,
    preset_config,
    save_model,
    train,
    with_depth,
    write_history,
)
from .prescription import AUDIOGRAM_FREQUENCIES_HZ, Audiogram, apply_linear_gain, audiograms_by_id, load_audiograms, nalr_gains
from .signal_core import DEFAULT_STFT, WaveBuffer, magnitude_phase, read_wav, stft, write_wav
from .wdrc import CompressorConfig, amplify_reference

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "model.namp"
HISTORY_FILE = "history.csv"
REPORT_ROWS_FILE = "report.csv"
REPORT_SUMMARY_FILE = "summary.json"
SWEEP_TABLE_FILE = "sweep.csv"
SWEEP_SUMMARY_FILE = "sweep.json"


def default_run_dir(verb: str) -> Path:
    return Path(getattr(settings, "NEUROAMP_RUNS_DIR", "runs")) / verb


def prescribe(audiogram_path) -> List[dict]:
    result = []
    for a in load_audiograms(audiogram_path):
        result.append({
            "audiogram_id": a.id,
            "frequencies_hz": list(AUDIOGRAM_FREQUENCIES_HZ),
            "gains_db": list(nalr_gains(a).gains_db),
        })
    return result


def single_audiogram(path, audiogram_id: str = "") -> Audiogram:
    audiograms = load_audiograms(path)
    if audiogram_id:
        by_id = audiograms_by_id(audiograms)
        if audiogram_id not in by_id:
            raise InvalidAudiogram(f"{path}: no audiogram with id {audiogram_id!r}")
        return by_id[audiogram_id]
    return audiograms[0]


def amplify_file(in_path, audiogram: Audiogram, out_path, cfg: CompressorConfig) -> WaveBuffer:
    out, _ = amplify_reference(read_wav(in_path), audiogram, cfg)
    write_wav(out_path, out)
    return out


def mix_files(clean_path, noise_path, snr_db: float, out_path, seed: int) -> Mixture:
    mixture = mix_at_snr(read_wav(clean_path), read_wav(noise_path), snr_db, seed)
    write_wav(out_path, mixture.wave)
    return mixture


def make_corpus(n_utts: int, out_dir, config: RunConfig) -> List[ManifestEntry]:
    return synth_corpus(n_utts, config.seed, out_dir, jobs=config.jobs)


def make_targets(manifest_path, audiograms_path, out_manifest, config: RunConfig, target_dir=None) -> List[ManifestEntry]:
    entries = read_manifest(manifest_path)
    audiograms = load_audiograms(audiograms_path or Path(manifest_path).parent / AUDIOGRAMS_FILE)
    updated = build_targets(
        entries,
        audiograms,
        config.compressor,
        out_dir=target_dir,
        mode=config.mode,
        k=config.audiograms_per_utterance,
        jobs=config.jobs,
    )
    write_manifest(out_manifest, updated)
    return updated


# training ---------------------------------------------------------------------------
@transaction.atomic
def record_training_run(config: RunConfig, run_dir, checkpoint_path, result: TrainResult) -> TrainingRun:
    run = TrainingRun.objects.create(
        arch=config.model.arch,
        mode=config.mode,
        seed=config.seed,
        run_dir=str(run_dir),
        checkpoint_path=str(checkpoint_path),
        parameter_count=result.model.parameter_count,
        best_epoch=result.best_epoch or None,
        best_val_loss=result.best_val_loss if np.isfinite(result.best_val_loss) else None,
        stopped_early=result.stopped_early,
        resolved_config=config.to_dict(),
    )
    EpochRecord.objects.bulk_create(
        EpochRecord(run=run, epoch=s.epoch, train_loss=s.train_loss, val_loss=s.val_loss) for s in result.history
    )
    return run


def run_training(config: RunConfig, manifest_path, audiograms_path, run_dir) -> Tuple[TrainResult, TrainingRun]:
    run_dir = Path(run_dir)
    entries = read_manifest(manifest_path)
    audiograms = audiograms_by_id(load_audiograms(audiograms_path or Path(manifest_path).parent / AUDIOGRAMS_FILE))
    write_resolved(run_dir, config)

    model = AmpModel.initialize(config.model, seed=config.seed)
    result = train(model, entries, audiograms, config.train)
    checkpoint = run_dir / CHECKPOINT_FILE
    save_model(checkpoint, result.model)
    write_history(run_dir / HISTORY_FILE, result.history)
    run = record_training_run(config, run_dir, checkpoint, result)
    logger.info("run %s: best epoch %d, val loss %.6f", run.pk, result.best_epoch, result.best_val_loss)
    return result, run


def infer_file(model_path, in_path, audiogram: Audiogram, out_path) -> WaveBuffer:
    out = infer(load_model(model_path), read_wav(in_path), audiogram)
    write_wav(out_path, out)
    return out


# evaluation -------------------------------------------------------------------------
def _wav_stems(directory) -> Dict[str, Path]:
    return {p.stem: p for p in sorted(Path(directory).glob("*.wav"))}


def _condition_for(stem: str, entries: Dict[str, ManifestEntry]) -> str:
    if stem in entries:
        return str(entries[stem].condition)
    return Condition.NOISY.value if "_snr" in stem else Condition.CLEAN.value


def _score_job(job) -> List[eval_metrics.EvalRow]:
    stem, condition, ref_path, test_path, anchor_path = job
    anchor = read_wav(anchor_path) if anchor_path else None
    return eval_metrics.score_rows(stem, condition, read_wav(ref_path), read_wav(test_path), anchor)


def evaluate_dirs(
    ref_dir, test_dir, out_dir, anchor_dir=None, manifest_path=None, jobs: int = 1
) -> eval_metrics.EvalReport:
    """Score matching WAV files of two systems; rows are written before the summary is computed."""
    refs, tests = _wav_stems(ref_dir), _wav_stems(test_dir)
    if set(refs) != set(tests):
        only = sorted(set(refs) ^ set(tests))
        raise ScoreMismatch(f"{len(only)} files present in only one directory, first: {only[0]}")
    if not refs:
        raise MissingAudio(f"{ref_dir}: no WAV files")

    entries = {e.key: e for e in read_manifest(manifest_path)} if manifest_path else {}
    anchors = _wav_stems(anchor_dir) if anchor_dir else {}
    jobs_list = []
    for stem in sorted(refs):
        anchor = anchors.get(stem) or (entries[stem].clean_path if stem in entries else None)
        if anchor_dir and stem not in anchors:
            raise MissingAudio(f"{anchor_dir}: no anchor for {stem}")
        jobs_list.append((stem, _condition_for(stem, entries), refs[stem], tests[stem], anchor))

    rows = [row for group in run_parallel(_score_job, jobs_list, jobs) for row in group]
    rows.sort(key=lambda r: (r.utt_id, r.system))
    out_dir = Path(out_dir)
    eval_metrics.write_rows(out_dir / REPORT_ROWS_FILE, rows)
    report = eval_metrics.EvalReport.from_rows(rows)
    eval_metrics.write_summary(out_dir / REPORT_SUMMARY_FILE, report.summary)
    logger.info("scored %d utterances from %s against %s", len(refs), test_dir, ref_dir)
    return report


# sensitivity sweep ------------------------------------------------------------------
class SweepKind(models.TextChoices):
    SCALE = "scale", "Scale"
    DEPTH = "depth", "Depth"


@dataclass(frozen=True, eq=False)
class SweepPoint:
    variant: str
    parameter_count: int
    best_epoch: int
    best_val_loss: float
    summary: dict


def sweep_variants(base: ModelConfig, kind: str, depths: Sequence[int] = (1, 2, 3, 4)) -> Dict[str, ModelConfig]:
    if kind == SweepKind.SCALE:
        return {
            name: preset_config(name, arch=base.arch, skip_connection=base.skip_connection) for name in SCALE_PRESETS
        }
    if kind == SweepKind.DEPTH:
        return {f"depth{d}": with_depth(base, d) for d in depths}
    raise InvalidConfig(f"unknown sweep kind {kind!r}")


def sweep_table(points: Sequence[SweepPoint]) -> Tuple[List[str], List[list]]:
    header = ["variant", "parameters", "best_epoch", "best_val_loss"]
    for proxy in eval_metrics.PROXIES:
        for stat in ("lcc", "srcc", "mse"):
            header += [f"{proxy}_{stat}", f"{proxy}_{stat}_low", f"{proxy}_{stat}_high"]
    rows = []
    for point in points:
        row = [point.variant, point.parameter_count, point.best_epoch, point.best_val_loss]
        for proxy in eval_metrics.PROXIES:
            entry = point.summary[proxy]
            for stat in ("lcc", "srcc", "mse"):
                row += [entry[stat], *(entry[f"{stat}_ci95"] or (None, None))]
        rows.append(row)
    return header, rows


def run_sweep(
    config: RunConfig, manifest_path, audiograms_path, out_dir, kind: str, depths: Sequence[int] = (1, 2, 3, 4)
) -> List[SweepPoint]:
    """Train one model per variant and score its test-split outputs against the targets.

    Proxies are scored against each entry's clean source, so every variant is
    compared with the reference on the same footing as `eval`.
    """
    out_dir = Path(out_dir)
    entries = read_manifest(manifest_path)
    audiograms = audiograms_by_id(load_audiograms(audiograms_path or Path(manifest_path).parent / AUDIOGRAMS_FILE))
    held_out = select_split(entries, Split.TEST)
    if not held_out:
        raise EmptySplit(f"{manifest_path}: no test entries to score")
    if any(not e.target_path for e in held_out):
        raise MissingAudio(f"{manifest_path}: test entries have no targets; run build_targets first")

    points = []
    for variant, model_cfg in sweep_variants(config.model, kind, depths).items():
        logger.info("sweep %s: %s with %d parameters", variant, model_cfg.arch, count_parameters(model_cfg))
        result = train(AmpModel.initialize(model_cfg, seed=config.seed), entries, audiograms, config.train)
        written = infer_manifest(result.model, held_out, audiograms, out_dir / variant / "wav", jobs=config.jobs)
        rows = [
            row
            for entry, path in written
            for row in eval_metrics.score_rows(
                entry.key, str(entry.condition), read_wav(entry.target_path), read_wav(path), read_wav(entry.clean_path)
            )
        ]
        report = eval_metrics.EvalReport.from_rows(rows, strict=False)
        eval_metrics.write_rows(out_dir / variant / REPORT_ROWS_FILE, report.rows)
        eval_metrics.write_summary(out_dir / variant / REPORT_SUMMARY_FILE, report.summary)
        points.append(
            SweepPoint(variant, result.model.parameter_count, result.best_epoch, result.best_val_loss, report.summary)
        )

    header, rows = sweep_table(points)
    eval_metrics.write_csv(out_dir / SWEEP_TABLE_FILE, header, rows)
    eval_metrics.write_summary(
        out_dir / SWEEP_SUMMARY_FILE,
        {
            "kind": str(kind),
            "arch": str(config.model.arch),
            "variants": {
                p.variant: {"parameters": p.parameter_count, "best_val_loss": p.best_val_loss, **p.summary}
                for p in points
            },
        },
    )
    return points


# analysis ---------------------------------------------------------------------------
def analysis_systems(
    wave: WaveBuffer, a: Audiogram, cfg: CompressorConfig, model: Optional[AmpModel] = None
) -> Dict[str, WaveBuffer]:
    systems = {
        "unprocessed": wave,
        "nalr": apply_linear_gain(wave, nalr_gains(a)),
        "nalr_wdrc": amplify_reference(wave, a, cfg)[0],
    }
    if model is not None:
        systems["neuroamp"] = infer(model, wave, a)
    return systems


def analyze(in_path, a: Audiogram, out_dir, cfg: CompressorConfig, model_path=None) -> Dict[str, Path]:
    """Plot data for one utterance: waveforms, dB spectrograms, band-energy tracks and realized gains."""
    wave = read_wav(in_path)
    systems = analysis_systems(wave, a, cfg, load_model(model_path) if model_path else None)
    names = list(systems)
    out_dir = Path(out_dir)
    written = {}

    time_s = np.arange(len(wave)) / wave.sample_rate_hz
    written["waveforms"] = out_dir / "waveforms.csv"
    eval_metrics.write_csv(
        written["waveforms"], ["time_s", *names], zip(time_s, *(systems[n].samples for n in names))
    )

    freqs = DEFAULT_STFT.bin_frequencies()
    tracks = {}
    for name in names:
        mag, _ = magnitude_phase(stft(systems[name]))
        tracks[name] = eval_metrics.band_energy(mag).as_array()
        frame_times = np.arange(mag.n_frames) * DEFAULT_STFT.hop_duration_s
        db = 20.0 * np.log10(mag.frames + eval_metrics.LSD_EPS)
        written[f"spectrogram_{name}"] = out_dir / f"spectrogram_{name}.csv"
        eval_metrics.write_csv(
            written[f"spectrogram_{name}"],
            ["time_s", *(f"{f:g}Hz" for f in freqs)],
            ([t, *row] for t, row in zip(frame_times, db)),
        )

    n_frames = next(iter(tracks.values())).shape[0]
    written["band_energy"] = out_dir / "band_energy.csv"
    eval_metrics.write_csv(
        written["band_energy"],
        ["time_s", *(f"{n}_{band}" for n in names for band in eval_metrics.BAND_NAMES)],
        (
            [t * DEFAULT_STFT.hop_duration_s, *(tracks[n][t, b] for n in names for b in range(3))]
            for t in range(n_frames)
        ),
    )

    realized = {n: eval_metrics.effective_gain(wave, systems[n]) for n in names if n != "unprocessed"}
    prescribed = nalr_gains(a).gains_db
    written["gains"] = out_dir / "gains.csv"
    eval_metrics.write_csv(
        written["gains"],
        ["frequency_hz", "nalr_prescribed", *realized],
        ([f, prescribed[i], *(realized[n][i] for n in realized)] for i, f in enumerate(AUDIOGRAM_FREQUENCIES_HZ)),
    )
    logger.info("analysis of %s for %s written to %s", in_path, a.id, out_dir)
    return written
