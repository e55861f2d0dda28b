import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..dataset import ManifestEntry, PairedExample, Split, load_pair, logmag_features, run_parallel, select_split
from ..exceptions import EmptySplit, InvalidAudiogram, InvalidConfig, IoFailure, ShapeMismatch
from ..prescription import Audiogram
from ..signal_core import DEFAULT_STFT, MagnitudeSpectrogram, StftConfig, WaveBuffer, istft, read_wav, recombine, write_wav
from .architectures import AmpModel, forward, forward_graph
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    batch_size: int = 1
    max_epochs: int = 100
    early_stop_patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.epsilon <= 0:
            raise InvalidConfig("lr and epsilon must be positive")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise InvalidConfig("beta1 and beta2 must lie in (0, 1)")
        if self.batch_size != 1:
            raise InvalidConfig("only batch_size 1 is supported")
        if self.max_epochs < 1 or self.early_stop_patience < 1:
            raise InvalidConfig("max_epochs and early_stop_patience must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: Dict[str, np.ndarray]) -> "AdamState":
        return cls(
            0,
            {name: np.zeros(value.shape) for name, value in params.items()},
            {name: np.zeros(value.shape) for name, value in params.items()},
        )


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass(eq=False)
class TrainResult:
    model: AmpModel
    history: List[EpochStats]
    best_epoch: int
    best_val_loss: float
    stopped_early: bool


class EarlyStopping:
    """Tracks the best validation loss; stops once `patience` epochs pass without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_epoch = 0
        self.best_loss = float("inf")
        self.last_epoch = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        self.last_epoch = epoch
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            return True
        return False

    @property
    def should_stop(self) -> bool:
        return self.best_epoch > 0 and self.last_epoch - self.best_epoch >= self.patience


def loss_mse(pred: Tensor, target: np.ndarray) -> Tensor:
    """Squared error summed over bins and averaged over frames."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.shape} and target {target.shape} differ")
    residual = pred - target
    return (residual * residual).sum() * (1.0 / target.shape[0])


def backward(loss: Tensor, params: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
    loss.backward()
    return {name: t.grad if t.grad is not None else np.zeros(t.shape) for name, t in params.items()}


def adam_step(
    params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState, cfg: TrainConfig
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    t = state.t + 1
    m, v, updated = {}, {}, {}
    for name, value in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != value.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} does not match parameter {value.shape}")
        m[name] = cfg.beta1 * state.m[name] + (1.0 - cfg.beta1) * g
        v[name] = cfg.beta2 * state.v[name] + (1.0 - cfg.beta2) * g * g
        m_hat = m[name] / (1.0 - cfg.beta1**t)
        v_hat = v[name] / (1.0 - cfg.beta2**t)
        step = cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        updated[name] = (value.astype(np.float64) - step).astype(value.dtype)
    return updated, AdamState(t, m, v)


def example_loss(model: AmpModel, example: PairedExample) -> float:
    pred = forward(model, example.input_logmag, example.audiogram)
    residual = pred - example.target_logmag
    return float(np.sum(residual**2) / residual.shape[0])


def fit(
    model: AmpModel,
    train_examples: Sequence[PairedExample],
    val_examples: Sequence[PairedExample],
    cfg: TrainConfig,
    on_epoch: Optional[Callable[[EpochStats], None]] = None,
) -> TrainResult:
    """Per-example Adam updates in seeded shuffled order, early stopping on the validation loss."""
    if not train_examples:
        raise EmptySplit("training split is empty")
    if not val_examples:
        raise EmptySplit("validation split is empty")

    rng = np.random.default_rng(cfg.seed)
    state = AdamState.zeros_like(model.params)
    stopper = EarlyStopping(cfg.early_stop_patience)
    best = model.copy()
    history: List[EpochStats] = []

    for epoch in range(1, cfg.max_epochs + 1):
        losses = []
        for index in rng.permutation(len(train_examples)):
            example = train_examples[index]
            pred, leaves = forward_graph(model, example.input_logmag, example.audiogram)
            loss = loss_mse(pred, example.target_logmag)
            params, state = adam_step(model.params, backward(loss, leaves), state, cfg)
            model = AmpModel(model.config, params, model.rng_seed)
            losses.append(float(loss.data))

        stats = EpochStats(epoch, float(np.mean(losses)), float(np.mean([example_loss(model, ex) for ex in val_examples])))
        history.append(stats)
        logger.info("epoch %d train_loss=%.6f val_loss=%.6f", epoch, stats.train_loss, stats.val_loss)
        if on_epoch is not None:
            on_epoch(stats)

        if stopper.update(epoch, stats.val_loss):
            best = model.copy()
        if stopper.should_stop:
            logger.info("early stop after epoch %d; best epoch %d", epoch, stopper.best_epoch)
            break

    return TrainResult(best, history, stopper.best_epoch, stopper.best_loss, stopper.should_stop)


def train(
    model: AmpModel,
    manifest: Sequence[ManifestEntry],
    audiograms: Dict[str, Audiogram],
    cfg: TrainConfig,
    stft_cfg: StftConfig = DEFAULT_STFT,
    on_epoch: Optional[Callable[[EpochStats], None]] = None,
) -> TrainResult:
    train_entries = select_split(manifest, Split.TRAIN)
    val_entries = select_split(manifest, Split.VAL)
    if not train_entries or not val_entries:
        raise EmptySplit(f"manifest has {len(train_entries)} train and {len(val_entries)} val entries; both are required")
    train_examples = [load_pair(e, audiograms, stft_cfg) for e in train_entries]
    val_examples = [load_pair(e, audiograms, stft_cfg) for e in val_entries]
    logger.info("training %s on %d examples, validating on %d", model.config.arch, len(train_examples), len(val_examples))
    return fit(model, train_examples, val_examples, cfg, on_epoch)


def write_history(path, history: Sequence[EpochStats]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_loss"])
            for row in history:
                writer.writerow([row.epoch, repr(row.train_loss), repr(row.val_loss)])
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


# gradient checking ------------------------------------------------------------------
def check_gradients(
    model: AmpModel,
    input_logmag: np.ndarray,
    target_logmag: np.ndarray,
    a: Audiogram,
    step: float = 1e-3,
    max_entries: int = 16,
    seed: int = 0,
    scale_floor: float = 1e-4,
) -> Dict[str, float]:
    """Relative error between backprop and central differences, per parameter tensor.

    Up to `max_entries` randomly chosen entries of each tensor are perturbed. The
    error is |g_analytic - g_numeric| / max(|g_analytic| + |g_numeric|, scale_floor)
    with norms taken over the perturbed entries.
    """
    model = model.astype(np.float64)
    pred, leaves = forward_graph(model, input_logmag, a)
    analytic = backward(loss_mse(pred, target_logmag), leaves)

    def loss_at(params):
        return example_loss(AmpModel(model.config, params, model.rng_seed), PairedExample(input_logmag, target_logmag, a, np.zeros_like(input_logmag)))

    rng = np.random.default_rng(seed)
    errors = {}
    for name, value in model.params.items():
        flat_indices = rng.choice(value.size, size=min(max_entries, value.size), replace=False)
        numeric, exact = [], []
        for flat in flat_indices:
            index = np.unravel_index(flat, value.shape)
            shifted = dict(model.params)
            nudged = value.copy()
            nudged[index] = value[index] + step
            shifted[name] = nudged
            upper = loss_at(shifted)
            nudged = value.copy()
            nudged[index] = value[index] - step
            shifted[name] = nudged
            lower = loss_at(shifted)
            numeric.append((upper - lower) / (2.0 * step))
            exact.append(analytic[name][index])
        numeric, exact = np.asarray(numeric), np.asarray(exact)
        denom = max(np.linalg.norm(exact) + np.linalg.norm(numeric), scale_floor)
        errors[name] = float(np.linalg.norm(exact - numeric) / denom)
    return errors


# inference ------------------------------------------------------------------------
def infer(model: AmpModel, wave: WaveBuffer, a: Audiogram, stft_cfg: StftConfig = DEFAULT_STFT) -> WaveBuffer:
    """Predict the amplified magnitude and resynthesize it with the input phase."""
    features, phase, origin_len = logmag_features(wave, stft_cfg)
    magnitude = np.maximum(np.expm1(forward(model, features, a)), 0.0)
    return istft(recombine(MagnitudeSpectrogram(magnitude, stft_cfg), phase, origin_len))


def _infer_job(job) -> str:
    model, entry, audiogram, out_path, stft_cfg = job
    write_wav(out_path, infer(model, read_wav(entry.input_path), audiogram, stft_cfg))
    return out_path


def infer_manifest(
    model: AmpModel,
    entries: Sequence[ManifestEntry],
    audiograms: Dict[str, Audiogram],
    out_dir,
    stft_cfg: StftConfig = DEFAULT_STFT,
    jobs: int = 1,
) -> List[Tuple[ManifestEntry, str]]:
    """Run inference on every entry; outputs are named <utt_id>__<audiogram_id>.wav."""
    out_dir = Path(out_dir)
    jobs_list = []
    for entry in entries:
        if entry.audiogram_id not in audiograms:
            raise InvalidAudiogram(f"{entry.utt_id}: no audiogram assigned; run build_targets first")
        jobs_list.append((model, entry, audiograms[entry.audiogram_id], str(out_dir / f"{entry.key}.wav"), stft_cfg))
    paths = run_parallel(_infer_job, jobs_list, jobs)
    logger.info("wrote %d enhanced files to %s", len(paths), out_dir)
    return list(zip(entries, paths))
