"""Training loop, evaluation, cross-validation and noise-robustness sweeps."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..audio_io import CLIP_SAMPLES, SAMPLE_RATE, AudioClip, fit_to_duration, read_wav, resample
from ..augment import AugmentPolicy, AugmentResources, augment_spectrogram, augment_waveform, compose_noisy_scene
from ..errors import CheckpointError, DataError, NumericError, ShapeError
from ..features import LogMelSpectrogram, log_mel
from ..model import CryDetector, ModelConfig
from ..nn import Adam, cyclical_lr, load_checkpoint, save_checkpoint
from ..nn import functional as F
from ..nn.tensor import Tensor
from .folds import FoldSplit, stratified_holdout
from .manifest import DatasetManifest
from .metrics import MetricsReport, metrics_from_scores, summarize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabeledClip:
    clip: AudioClip
    target: int
    name: str = ""


def load_clip(path) -> AudioClip:
    """Read a file and bring it to one 5 s, 16 kHz clip (first chunk, or tiled)."""
    clip = resample(read_wav(path), SAMPLE_RATE)
    if len(clip) == CLIP_SAMPLES:
        return clip
    if len(clip) == 0:
        raise DataError(f"{path}: empty audio")
    return fit_to_duration([clip])[0]


def load_items(manifest: DatasetManifest) -> list[LabeledClip]:
    return [LabeledClip(load_clip(e.path), e.target, e.path) for e in manifest]


@dataclass
class TrainConfig:
    max_epochs: int = 200
    patience: int = 10
    batch_size: int = 32
    base_lr: float = 1e-4
    max_lr: float = 1e-3
    cycle: int = 20000
    policy: AugmentPolicy = field(default_factory=AugmentPolicy)
    seed: int = 0
    val_fraction: float = 0.1
    threshold: float = 0.5
    max_batches: int | None = None
    dtype: str = "float32"

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if not (np.isfinite(self.base_lr) and np.isfinite(self.max_lr)) or self.base_lr < 0:
            raise ValueError(f"learning rates must be finite and non-negative, got {self.base_lr}, {self.max_lr}")
        if self.base_lr > self.max_lr:
            raise ValueError(f"base_lr {self.base_lr} exceeds max_lr {self.max_lr}")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in [0, 1), got {self.val_fraction}")


class EarlyStopping:
    """Stop once the score has not strictly improved for ``patience`` consecutive rounds."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best = -np.inf
        self.stale = 0
        self.rounds = 0

    def update(self, score: float) -> bool:
        """Record one validation round; returns True when it is a new best."""
        self.rounds += 1
        if score > self.best:
            self.best = score
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    batches: int
    mean_loss: float
    val: MetricsReport | None = None


@dataclass
class TrainResult:
    best_state: dict[str, np.ndarray]
    best_epoch: int
    best_val_f1: float | None
    history: list[EpochRecord]
    losses: list[float]
    stopped_early: bool

    @property
    def batches(self) -> int:
        return len(self.losses)


def item_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Independent stream per (seed, epoch, item) so items can be prepared in any order."""
    return np.random.default_rng([seed, epoch, index])


class FeatureSource:
    """Turns labelled clips into (possibly augmented) log-Mel arrays.

    Clean features are cached when the policy never touches the waveform.
    """

    def __init__(self, items: Sequence[LabeledClip], policy: AugmentPolicy | None = None,
                 resources: AugmentResources | None = None, seed: int = 0):
        self.items = list(items)
        self.policy = policy or AugmentPolicy()
        self.resources = resources or AugmentResources()
        self.seed = seed
        self._cache: dict[int, np.ndarray] = {}

    def clean(self, i: int) -> np.ndarray:
        if i not in self._cache:
            self._cache[i] = log_mel(self.items[i].clip).values
        return self._cache[i]

    def features(self, i: int, epoch: int) -> np.ndarray:
        if not self.policy.active:
            return self.clean(i)
        rng = item_rng(self.seed, epoch, i)
        if self.policy.needs_waveform:
            spec = log_mel(augment_waveform(self.items[i].clip, self.policy, rng, self.resources))
        else:
            spec = LogMelSpectrogram(self.clean(i))
        return augment_spectrogram(spec, self.policy, rng).values

    def batch(self, indices, epoch: int, dtype) -> tuple[np.ndarray, np.ndarray]:
        x = np.stack([self.features(int(i), epoch) for i in indices])[:, None].astype(dtype)
        y = np.array([self.items[int(i)].target for i in indices], dtype=dtype)
        return x, y


def predict_proba(model: CryDetector, items: Sequence[LabeledClip], batch_size: int = 32,
                  source: FeatureSource | None = None) -> np.ndarray:
    source = source or FeatureSource(items)
    out = []
    for start in range(0, len(items), batch_size):
        idx = range(start, min(start + batch_size, len(items)))
        x = np.stack([source.clean(i) for i in idx])[:, None].astype(model.dtype)
        out.append(model.proba(x))
    return np.concatenate(out) if out else np.zeros(0)


def evaluate_model(model: CryDetector, items: Sequence[LabeledClip], threshold: float = 0.5,
                   source: FeatureSource | None = None) -> MetricsReport:
    probs = predict_proba(model, items, source=source)
    return metrics_from_scores(probs, [it.target for it in items], threshold)


def load_model(path, cfg: ModelConfig | None = None) -> CryDetector:
    state, seed = load_checkpoint(path)
    model = CryDetector(cfg, seed=seed or 0)
    try:
        model.load_state_dict(state)
    except ShapeError as exc:
        raise CheckpointError(f"{path}: checkpoint does not fit the model config ({exc})") from exc
    return model


def evaluate(checkpoint, items, threshold: float = 0.5, cfg: ModelConfig | None = None) -> MetricsReport:
    """Metrics of a model (or checkpoint path) on labelled clips; p >= threshold means cry."""
    model = checkpoint if isinstance(checkpoint, CryDetector) else load_model(checkpoint, cfg)
    if isinstance(items, DatasetManifest):
        items = load_items(items)
    return evaluate_model(model, items, threshold)


def fit(
    model: CryDetector,
    train_items: Sequence[LabeledClip],
    val_items: Sequence[LabeledClip],
    cfg: TrainConfig,
    resources: AugmentResources | None = None,
    on_epoch: Callable[[EpochRecord], bool | None] | None = None,
) -> TrainResult:
    """Mini-batch training with Adam, a cyclical learning rate and early stopping on validation F1.

    Without validation clips every epoch counts as an improvement.  The model
    is left holding the best weights.  ``on_epoch`` may return True to stop.
    """
    if not train_items:
        raise DataError("no training samples")
    dtype = np.dtype(cfg.dtype)
    model.astype(dtype)
    source = FeatureSource(train_items, cfg.policy, resources, cfg.seed)
    val_source = FeatureSource(val_items) if val_items else None
    opt = Adam(model.parameters())
    stopper = EarlyStopping(cfg.patience)
    history: list[EpochRecord] = []
    losses: list[float] = []
    best_state = _snapshot(model)
    best_epoch, best_f1 = 0, None
    stopped_early = False
    step = 0
    n = len(train_items)

    for epoch in range(cfg.max_epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        epoch_losses = []
        model.train()
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            if cfg.max_batches is not None and step >= cfg.max_batches:
                break
            idx = order[start : start + cfg.batch_size]
            x, y = source.batch(idx, epoch, dtype)
            lr = cyclical_lr(step, cfg.base_lr, cfg.max_lr, cfg.cycle)
            opt.zero_grad()
            loss = F.bce_with_logits(model(Tensor(x)), y)
            value = float(loss.data)
            where = lambda: {  # noqa: E731
                "epoch": epoch, "batch": b, "step": step, "lr": lr,
                "items": [train_items[int(i)].name or int(i) for i in idx],
            }
            if not np.isfinite(value):
                raise _numeric(f"non-finite loss {value}", where())
            loss.backward()
            if not all(p.grad is None or np.all(np.isfinite(p.grad)) for p in opt.params):
                raise _numeric("non-finite gradient", where())
            opt.step(lr)
            step += 1
            epoch_losses.append(value)
        if not epoch_losses:
            break
        losses.extend(epoch_losses)
        record = EpochRecord(epoch, len(epoch_losses), float(np.mean(epoch_losses)))
        if val_source is not None:
            record.val = evaluate_model(model, val_items, cfg.threshold, val_source)
            improved = stopper.update(record.val.f1)
        else:
            improved = True
        if improved:
            best_state, best_epoch = _snapshot(model), epoch
            best_f1 = record.val.f1 if record.val is not None else None
        history.append(record)
        log.info("epoch %d: loss %.4f%s", epoch, record.mean_loss,
                 f", val f1 {record.val.f1:.3f}" if record.val else "")
        if on_epoch is not None and on_epoch(record):
            break
        if val_source is not None and stopper.should_stop:
            stopped_early = True
            break
        if cfg.max_batches is not None and step >= cfg.max_batches:
            break

    model.load_state_dict(best_state)
    return TrainResult(best_state, best_epoch, best_f1, history, losses, stopped_early)


def _numeric(message: str, batch_info: dict) -> NumericError:
    err = NumericError(f"{message} at {batch_info}")
    err.batch_info = batch_info
    return err


def _snapshot(model: CryDetector) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in model.state_dict().items()}


@dataclass
class CrossValResult:
    fold_reports: list[MetricsReport]
    checkpoints: list[Path | None]
    results: list[TrainResult]

    @property
    def summary(self) -> dict[str, dict[str, float]]:
        return summarize(self.fold_reports)


def train_model(
    data,
    folds: FoldSplit,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir=None,
    resources: AugmentResources | None = None,
) -> CrossValResult:
    """Train and test once per fold; a stratified slice of the training folds drives early stopping."""
    items = load_items(data) if isinstance(data, DatasetManifest) else list(data)
    targets = np.array([it.target for it in items])
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    reports, paths, results = [], [], []
    for k in range(folds.k):
        train_idx, test_idx = folds.train_test(k)
        fit_idx, val_idx = stratified_holdout(train_idx, targets, train_cfg.val_fraction, seed=train_cfg.seed + k)
        model = CryDetector(model_cfg, seed=train_cfg.seed)
        result = fit(model, [items[i] for i in fit_idx], [items[i] for i in val_idx], train_cfg, resources)
        report = evaluate_model(model, [items[i] for i in test_idx], train_cfg.threshold)
        path = None
        if out is not None:
            path = out / f"fold{k}.ckpt"
            save_checkpoint(path, result.best_state, seed=train_cfg.seed)
        log.info("fold %d: f1 %.3f accuracy %.3f", k, report.f1, report.accuracy)
        reports.append(report)
        paths.append(path)
        results.append(result)
    return CrossValResult(reports, paths, results)


CLEAN = None
DEFAULT_SNRS = (CLEAN, 0.0, -10.0, -20.0)


def snr_label(snr) -> str:
    return "clean" if snr is None else f"{snr:g} dB"


def corrupt(items: Sequence[LabeledClip], noise_pool, snr_db: float, seed: int,
            n_noises: tuple[int, int] = (2, 3), power_db_gain: bool = False) -> list[LabeledClip]:
    """Every clip mixed with a noisy scene at a fixed per-noise SNR; the draw per clip depends only on seed."""
    out = []
    for i, it in enumerate(items):
        rng = np.random.default_rng([seed, i])
        clip = compose_noisy_scene(it.clip, noise_pool, rng, (snr_db, snr_db), n_noises, power_db_gain)
        out.append(LabeledClip(clip, it.target, it.name))
    return out


def snr_sweep_eval(
    checkpoint,
    items,
    noise_pool,
    snrs: Sequence[float | None] = DEFAULT_SNRS,
    seed: int = 0,
    threshold: float = 0.5,
    cfg: ModelConfig | None = None,
    power_db_gain: bool = False,
) -> list[tuple[float | None, MetricsReport]]:
    """Metrics at each SNR point (``None`` = clean)."""
    model = checkpoint if isinstance(checkpoint, CryDetector) else load_model(checkpoint, cfg)
    if isinstance(items, DatasetManifest):
        items = load_items(items)
    out = []
    for snr in snrs:
        subset = items if snr is None else corrupt(items, noise_pool, snr, seed, power_db_gain=power_db_gain)
        out.append((snr, evaluate_model(model, subset, threshold)))
    noisy = [(s, r.f1) for s, r in out if s is not None]
    for (s1, f1), (s2, f2) in zip(noisy, noisy[1:]):
        if s2 < s1 and f2 > f1:
            warnings.warn(f"F1 rose from {f1:.3f} at {s1:g} dB to {f2:.3f} at {s2:g} dB", stacklevel=2)
    return out
