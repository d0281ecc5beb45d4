"""Mini-batch training with early stopping, and window-set evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigError, DataError, DivergenceError, NumericError
from .metrics import MetricsReport, confusion_from_predictions, report_from_confusion
from .models import Model
from .nn.losses import bce_loss
from .nn.optim import Adam
from .traces import Dataset, windows_to_arrays

_STREAM_VAL_SPLIT = 3
_STREAM_EPOCH = 4


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 32
    lr: float = 1e-3
    shuffle_seed: int = 0
    early_stop_patience: int = 10
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be at least 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in (0, 1)")


@dataclass(frozen=True)
class TrainResult:
    """Per-epoch mean losses and the early-stopping outcome."""

    train_loss: tuple[float, ...]
    val_loss: tuple[float, ...]
    best_epoch: int
    stopped_early: bool

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)


def _mean_loss(model: Model, x: np.ndarray, y: np.ndarray) -> float:
    loss, _ = bce_loss(model.forward(x), y)
    return float(loss.mean())


def train(model: Model, dataset: Dataset, cfg: TrainConfig) -> tuple[Model, TrainResult]:
    """Mini-batch Adam over the dataset's training windows.

    The training split is carved once into fit/validation parts
    (deterministically from shuffle_seed); each epoch re-shuffles the fit
    part with a generator seeded by shuffle_seed + epoch. Batch gradients
    are means over the windows of the batch. After the final epoch the
    parameters revert to the best-validation-loss snapshot, whether or not
    patience ran out.

    Returns the model (mutated in place) and the loss history. Raises
    DivergenceError with the epoch and batch index if a loss goes
    non-finite.
    """
    x_all, y_all = windows_to_arrays(dataset.train)
    return fit_arrays(model, x_all, y_all, cfg)


def fit_arrays(
    model: Model, x_all: np.ndarray, y_all: np.ndarray, cfg: TrainConfig
) -> tuple[Model, TrainResult]:
    """Train on raw arrays: x (n, W, 3) and y (n,) of 0/1 targets."""
    n = len(x_all)
    if n < 2:
        raise DataError("need at least 2 training windows")
    n_val = int(np.floor(cfg.val_fraction * n + 0.5))
    n_val = min(max(n_val, 1), n - 1)
    order = rng.stream(cfg.shuffle_seed, _STREAM_VAL_SPLIT).permutation(n)
    val_idx, fit_idx = order[:n_val], order[n_val:]
    x_fit, y_fit = x_all[fit_idx], y_all[fit_idx]
    x_val, y_val = x_all[val_idx], y_all[val_idx]

    params = model.params()
    optimizer = Adam(lr=cfg.lr)
    train_losses: list[float] = []
    val_losses: list[float] = []
    best_val = np.inf
    best_params = model.clone_params()
    best_epoch = 0
    since_best = 0
    stopped_early = False

    for epoch in range(cfg.epochs):
        perm = rng.stream(cfg.shuffle_seed + epoch, _STREAM_EPOCH).permutation(len(x_fit))
        epoch_loss_sum = 0.0
        for batch_no, start in enumerate(range(0, len(perm), cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            xb, yb = x_fit[idx], y_fit[idx]
            try:
                p = model.forward(xb)
            except NumericError:
                raise DivergenceError(epoch, batch_no) from None
            losses, dgrad = bce_loss(p, yb)
            batch_loss = float(losses.mean())
            if not np.isfinite(batch_loss):
                raise DivergenceError(epoch, batch_no)
            # mean-of-per-window gradients: scale the upstream by 1/B
            model.backward(dgrad / len(idx))
            optimizer.step(params, model.grads())
            epoch_loss_sum += float(losses.sum())
        train_losses.append(epoch_loss_sum / len(x_fit))

        try:
            val_loss = _mean_loss(model, x_val, y_val)
        except NumericError:
            raise DivergenceError(epoch, -1) from None
        if not np.isfinite(val_loss):
            raise DivergenceError(epoch, -1)
        val_losses.append(val_loss)

        if val_loss < best_val:
            best_val = val_loss
            best_params = model.clone_params()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience:
                stopped_early = True
                break

    model.set_params(best_params)
    return model, TrainResult(
        train_loss=tuple(train_losses),
        val_loss=tuple(val_losses),
        best_epoch=best_epoch,
        stopped_early=stopped_early,
    )


def evaluate(model: Model, windows, threshold: float = 0.5) -> MetricsReport:
    """Five-metric report over labeled windows; Malicious iff p >= threshold."""
    ws = list(windows)
    if not ws:
        raise DataError("cannot evaluate zero windows")
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must be in [0, 1], got {threshold}")
    x, y = windows_to_arrays(ws)
    p = model.forward(x)
    return report_from_confusion(confusion_from_predictions(p, y, threshold))
