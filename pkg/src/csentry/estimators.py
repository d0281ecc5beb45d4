"""Scikit-learn estimator facade over the window pipeline and model zoo.

These wrappers make the detector compose with the wider ecosystem
(pipelines, cross-validation, cloning) while the heavy lifting stays in
the hand-written layers. Window data is three-channel, so transformers
here work on (n, W, 3) arrays rather than flat matrices; flattened 2-D
input is accepted and reshaped.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigError
from .models import ModelKind, ModelSpec, build
from .training import TrainConfig, fit_arrays
from .validation import check_binary_labels, check_window_array


class WindowNormalizer(TransformerMixin, BaseEstimator):
    """Per-channel standardization with statistics from the fit data only.

    Matches the corpus pipeline's convention: population standard
    deviation, and zero-variance channels scale by 1 instead of dividing
    by zero. transform and inverse_transform always return (n, W, 3)
    arrays.
    """

    def fit(self, X, y=None):
        arr = check_window_array(X)
        flat = arr.reshape(-1, arr.shape[2])
        self.mean_ = flat.mean(axis=0)
        std = flat.std(axis=0)
        self.std_ = np.where(std == 0.0, 1.0, std)
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "mean_")
        return (check_window_array(X) - self.mean_) / self.std_

    def inverse_transform(self, X) -> np.ndarray:
        check_is_fitted(self, "mean_")
        return check_window_array(X) * self.std_ + self.mean_


class CscaDetector(ClassifierMixin, BaseEstimator):
    """Binary cache-attack detector over counter windows.

    ``kind`` names one of the six architectures (case-insensitive string
    or a ModelKind). fit builds the network for the window length seen in
    the data and runs the mini-batch Adam loop with early stopping;
    predict thresholds the malicious-class probability. One ``seed``
    drives both parameter initialization and shuffling, so fits are fully
    deterministic.
    """

    def __init__(
        self,
        kind="hybridcnnlstm",
        hidden=32,
        conv_channels=16,
        kernel=3,
        pool=2,
        epochs=30,
        batch_size=32,
        lr=1e-3,
        val_fraction=0.1,
        early_stop_patience=5,
        threshold=0.5,
        seed=0,
    ):
        self.kind = kind
        self.hidden = hidden
        self.conv_channels = conv_channels
        self.kernel = kernel
        self.pool = pool
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.val_fraction = val_fraction
        self.early_stop_patience = early_stop_patience
        self.threshold = threshold
        self.seed = seed

    def _model_kind(self) -> ModelKind:
        if isinstance(self.kind, ModelKind):
            return self.kind
        return ModelKind.parse(str(self.kind))

    def fit(self, X, y):
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must be in [0, 1], got {self.threshold}")
        x = check_window_array(X)
        targets = check_binary_labels(y, len(x))
        spec = ModelSpec(
            kind=self._model_kind(),
            window_len=x.shape[1],
            in_channels=x.shape[2],
            hidden=self.hidden,
            conv_channels=self.conv_channels,
            kernel=self.kernel,
            pool=self.pool,
            seed=self.seed,
        )
        cfg = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            shuffle_seed=self.seed,
            early_stop_patience=self.early_stop_patience,
            val_fraction=self.val_fraction,
        )
        self.model_, self.train_result_ = fit_arrays(build(spec), x, targets, cfg)
        self.window_len_ = x.shape[1]
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X) -> np.ndarray:
        """Class probabilities, columns ordered as classes_ = [0, 1]."""
        check_is_fitted(self, "model_")
        x = check_window_array(X, window_len=self.window_len_)
        p = self.model_.forward(x)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= self.threshold).astype(int)
