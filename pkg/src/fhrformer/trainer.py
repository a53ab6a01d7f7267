"""Self-supervised training loop with plateau scheduling and early stopping."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DataError, NumericalError, TrainingError
from .losses import hybrid_loss, recon_loss
from .metrics import (
    METRIC_KEYS,
    MetricsReport,
    cc,
    frechet_distance,
    mae,
    mse,
    psnr_from_mse,
    ssim_1d,
)
from .model import FHRFormer, ModelConfig, eligible_patches, sample_mask, save_checkpoint
from .numerics import AdamState, PlateauScheduler, adam_step, no_grad
from .prep import PreparedSignal, leading_pad_length
from .rng import substream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    max_epochs: int = 200
    early_stop_patience: int = 20
    scheduler_patience: int = 5
    scheduler_factor: float = 0.1
    seed: int = 0
    mask_ratio: float = 0.15
    alpha: float = 0.95
    beta: float = 1.0

    def __post_init__(self):
        for name in ("batch_size", "max_epochs", "early_stop_patience", "scheduler_patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ConfigError("learning rate must be positive and weight decay non-negative")
        if not 0.0 < self.mask_ratio < 1.0:
            raise ConfigError(f"mask ratio must lie in (0, 1), got {self.mask_ratio}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**values)

    def replace(self, **changes) -> TrainConfig:
        return TrainConfig(**{**self.to_dict(), **changes})


@dataclass
class SignalBatchSet:
    """Stacked prepared signals: values (n, L) and left-pad lengths (n,)."""

    values: np.ndarray
    pad_lengths: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_signals(cls, signals: Sequence[PreparedSignal] | np.ndarray) -> SignalBatchSet:
        if isinstance(signals, SignalBatchSet):
            return signals
        if isinstance(signals, np.ndarray):
            values = np.atleast_2d(signals).astype(np.float32)
            return cls(values, np.zeros(values.shape[0], dtype=np.int64))
        if hasattr(signals, "records"):
            signals = signals.records
        if len(signals) == 0:
            raise DataError("empty signal set")
        values = np.stack([s.values for s in signals]).astype(np.float32)
        pads = np.array([leading_pad_length(s.values, s.missing_mask) for s in signals])
        return cls(values, pads)

    def subset(self, index) -> SignalBatchSet:
        return SignalBatchSet(self.values[index], self.pad_lengths[index])


def batch_masks(
    pad_lengths: np.ndarray, config: ModelConfig, gamma: float, rng: np.random.Generator
) -> np.ndarray:
    """One fresh patch mask per signal, padding-overlapping patches ineligible."""
    rows = []
    for pad in pad_lengths:
        eligible = eligible_patches(config.n_patches, config.patch_size, int(pad))
        rows.append(sample_mask(config.n_patches, gamma, eligible, rng).masked)
    return np.stack(rows)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    stale: int


@dataclass
class TrainState:
    adam: AdamState
    sched: PlateauScheduler
    epoch: int = 0
    best_val_loss: float = math.inf
    best_epoch: int = 0
    stale_epochs: int = 0
    best_params: dict[str, np.ndarray] | None = None
    history: list[EpochRecord] = field(default_factory=list)

    @classmethod
    def fresh(cls, cfg: TrainConfig) -> TrainState:
        return cls(
            adam=AdamState(learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay),
            sched=PlateauScheduler(
                learning_rate=cfg.learning_rate,
                patience=cfg.scheduler_patience,
                factor=cfg.scheduler_factor,
            ),
        )


def train_epoch(
    model: FHRFormer,
    data,
    cfg: TrainConfig,
    state: TrainState,
    epoch: int,
) -> float:
    """One pass over the training split; returns the sample-weighted mean total loss."""
    data = SignalBatchSet.from_signals(data)
    n = len(data)
    if n == 0:
        raise DataError("empty training split")
    order = substream(cfg.seed, "shuffle", epoch).permutation(n)
    total, seen = 0.0, 0
    for batch, start in enumerate(range(0, n, cfg.batch_size)):
        index = order[start:start + cfg.batch_size]
        masked = batch_masks(
            data.pad_lengths[index], model.config, cfg.mask_ratio,
            substream(cfg.seed, "mask", epoch, batch),
        )
        model.zero_grad()
        try:
            result = model.forward(
                data.values[index], masked, training=True,
                rng=substream(cfg.seed, "dropout", epoch, batch),
            )
            loss, _ = hybrid_loss(result, cfg.alpha, cfg.beta)
            if not math.isfinite(loss.item()):
                raise NumericalError("non-finite loss")
            loss.backward()
        except NumericalError as exc:
            raise TrainingError(f"epoch {epoch}, batch {batch}: {exc}") from exc
        grads = {name: p.grad for name, p in model.params.items()}
        adam_step(model.params, grads, state.adam)
        total += loss.item() * len(index)
        seen += len(index)
    return total / seen


def validate(model: FHRFormer, data, cfg: TrainConfig, mask_seed: int | None = None) -> float:
    """Mean total loss with dropout off and masks from a fixed seed."""
    data = SignalBatchSet.from_signals(data)
    if len(data) == 0:
        raise DataError("empty validation split")
    seed = cfg.seed if mask_seed is None else mask_seed
    total = 0.0
    with no_grad():
        for batch, start in enumerate(range(0, len(data), cfg.batch_size)):
            chunk = data.subset(slice(start, start + cfg.batch_size))
            masked = batch_masks(
                chunk.pad_lengths, model.config, cfg.mask_ratio,
                substream(seed, "val-mask", batch),
            )
            result = model.forward(chunk.values, masked, training=False)
            loss, _ = hybrid_loss(result, cfg.alpha, cfg.beta)
            total += loss.item() * len(chunk)
    return total / len(data)


LOG_FIELDS = ("epoch", "train_loss", "val_loss", "lr", "stale")


@dataclass
class FitResult:
    model: FHRFormer
    state: TrainState

    @property
    def history(self) -> list[EpochRecord]:
        return self.state.history


def fit(
    model: FHRFormer,
    train_data,
    val_data,
    cfg: TrainConfig,
    checkpoint_path: str | Path | None = None,
    log_path: str | Path | None = None,
    train_epoch_fn: Callable[..., float] | None = None,
    validate_fn: Callable[..., float] | None = None,
) -> FitResult:
    """Train until ``max_epochs`` or ``early_stop_patience`` stale epochs.

    The model is left holding the weights of the best validation epoch.
    ``train_epoch_fn`` / ``validate_fn`` replace the default epoch routines
    (same signatures as :func:`train_epoch` / :func:`validate`).
    """
    train_data = SignalBatchSet.from_signals(train_data)
    val_data = SignalBatchSet.from_signals(val_data)
    train_epoch_fn = train_epoch_fn or train_epoch
    validate_fn = validate_fn or validate
    state = TrainState.fresh(cfg)

    log_file = None
    if log_path is not None:
        log_file = open(log_path, "w", newline="")
        writer = csv.writer(log_file, lineterminator="\n")
        writer.writerow(LOG_FIELDS)
        log_file.flush()
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            state.epoch = epoch
            train_loss = train_epoch_fn(model, train_data, cfg, state, epoch)
            val_loss = validate_fn(model, val_data, cfg)
            if val_loss < state.best_val_loss:
                state.best_val_loss = val_loss
                state.best_epoch = epoch
                state.best_params = model.state_dict()
                state.stale_epochs = 0
                if checkpoint_path is not None:
                    save_checkpoint(model, checkpoint_path)
            else:
                state.stale_epochs += 1
            state.adam.learning_rate = state.sched.step(val_loss)
            record = EpochRecord(epoch, train_loss, val_loss, state.adam.learning_rate, state.stale_epochs)
            state.history.append(record)
            log.info(
                "epoch %d train %.6f val %.6f lr %.2e stale %d",
                epoch, train_loss, val_loss, record.lr, record.stale,
            )
            if log_file is not None:
                writer.writerow([getattr(record, k) for k in LOG_FIELDS])
                log_file.flush()
            if state.stale_epochs >= cfg.early_stop_patience:
                break
    finally:
        if log_file is not None:
            log_file.close()

    if state.best_params is not None:
        model.load_state_dict(state.best_params)
    return FitResult(model, state)


def reconstruct(
    model: FHRFormer, data, gamma: float, mask_seed: int, batch_size: int = 64
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inference-mode reconstruction with seeded masks.

    Returns (reconstructions (n, L), per-signal recon loss (n,), masks (n, N)).
    """
    data = SignalBatchSet.from_signals(data)
    outputs, rl, masks = [], [], []
    with no_grad():
        for batch, start in enumerate(range(0, len(data), batch_size)):
            chunk = data.subset(slice(start, start + batch_size))
            masked = batch_masks(chunk.pad_lengths, model.config, gamma, substream(mask_seed, "eval-mask", batch))
            result = model.forward(chunk.values, masked, training=False)
            outputs.append(result.reconstruction.data)
            rl.append(recon_loss(result.predictions, result.patches, result.masked).data)
            masks.append(masked)
    return np.concatenate(outputs), np.concatenate(rl), np.concatenate(masks)


def evaluate(model: FHRFormer, data, gamma: float | None = None, mask_seed: int = 0) -> MetricsReport:
    """Average the eight metrics over a split (FID is computed set-wise)."""
    data = SignalBatchSet.from_signals(data)
    gamma = model.config.mask_ratio if gamma is None else gamma
    recon, rl, _ = reconstruct(model, data, gamma, mask_seed)
    rows = []
    for x, xr in zip(data.values.astype(np.float64), recon.astype(np.float64)):
        err = mse(x, xr)
        rows.append((err, math.sqrt(err), mae(x, xr), psnr_from_mse(err, 1.0), ssim_1d(x, xr), cc(x, xr)))
    cols = np.array(rows)
    fid = frechet_distance(model.features(data.values), model.features(recon))
    return MetricsReport(
        rl=float(rl.mean()),
        mse=float(cols[:, 0].mean()),
        rmse=float(cols[:, 1].mean()),
        mae=float(cols[:, 2].mean()),
        psnr=float(cols[:, 3].mean()),
        ssim=float(cols[:, 4].mean()),
        fid=fid,
        cc=float(cols[:, 5].mean()),
    )


@dataclass
class SweepRow:
    patch_size: int
    mask_ratio: float
    metrics: MetricsReport | None
    epochs: int = 0
    error: str = ""


def sweep(
    patch_sizes: Sequence[int],
    mask_ratios: Sequence[float],
    train_data,
    val_data,
    test_data,
    model_config: ModelConfig,
    train_config: TrainConfig,
    out_dir: str | Path | None = None,
) -> list[SweepRow]:
    """Train and evaluate one model per (patch size, mask ratio) cell."""
    rows = []
    for patch_size in patch_sizes:
        for gamma in mask_ratios:
            try:
                mcfg = model_config.replace(patch_size=patch_size, mask_ratio=gamma)
                tcfg = train_config.replace(mask_ratio=gamma)
                model = FHRFormer(mcfg, seed=train_config.seed)
                ckpt = log_file = None
                if out_dir is not None:
                    stem = f"p{patch_size}_g{gamma:g}"
                    ckpt = Path(out_dir) / f"{stem}.fhrf"
                    log_file = Path(out_dir) / f"{stem}_log.csv"
                result = fit(model, train_data, val_data, tcfg, ckpt, log_file)
                report = evaluate(result.model, test_data, gamma, mask_seed=train_config.seed)
                rows.append(SweepRow(patch_size, gamma, report, len(result.history)))
            except Exception as exc:  # per-cell failures are recorded, the sweep continues
                log.exception("sweep cell p=%s gamma=%s failed", patch_size, gamma)
                rows.append(SweepRow(patch_size, gamma, None, error=f"{type(exc).__name__}: {exc}"))
    return rows


SWEEP_COLUMNS = ("patch_size", "mask_ratio", "rl", "psnr", "ssim", "fid", "mse", "rmse", "mae", "cc", "epochs", "error")


def write_sweep_table(rows: Sequence[SweepRow], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            metrics = row.metrics.as_dict() if row.metrics else {k: float("nan") for k in METRIC_KEYS}
            writer.writerow(
                [row.patch_size, row.mask_ratio]
                + [repr(metrics[k]) for k in SWEEP_COLUMNS[2:10]]
                + [row.epochs, row.error]
            )
