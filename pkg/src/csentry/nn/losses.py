"""Binary cross-entropy, the package's single training objective."""

from __future__ import annotations

import numpy as np

CLAMP = 1e-12


def bce_loss(prediction: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-element loss and d(loss)/d(prediction).

    Predictions are clamped to [1e-12, 1-1e-12] before the logs, so
    saturated sigmoids cannot produce infinities; the gradient is that of
    the clamped value. Works elementwise on arrays or scalars.
    """
    p = np.clip(np.asarray(prediction, dtype=np.float64), CLAMP, 1.0 - CLAMP)
    y = np.asarray(target, dtype=np.float64)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    grad = (p - y) / (p * (1.0 - p))
    return loss, grad
