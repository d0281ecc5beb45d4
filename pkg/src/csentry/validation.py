"""Input coercion and validation shared by the estimator layer."""

import numpy as np

from .errors import DataError
from .traces import Label, N_CHANNELS, Window


def check_window_array(X, window_len: int | None = None) -> np.ndarray:
    """Coerce ``X`` into a finite (n, W, 3) float64 array.

    Accepts a 3-D array of channel windows, a 2-D array of flattened
    windows whose column count is a multiple of 3 (channel-fastest order,
    as produced by ravel), or a sequence of Window objects. Passing
    ``window_len`` additionally pins W.
    """
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], Window):
        if not all(isinstance(w, Window) for w in X):
            raise DataError("mixed Window and non-Window inputs")
        arr = np.stack([w.values for w in X])
    else:
        try:
            arr = np.asarray(X, dtype=np.float64)
        except (TypeError, ValueError) as err:
            raise DataError(f"windows are not a numeric array: {err}") from None
    if arr.ndim == 2:
        n, cols = arr.shape
        if cols == 0 or cols % N_CHANNELS:
            raise DataError(
                f"flattened windows need a multiple of {N_CHANNELS} columns, "
                f"got {cols}"
            )
        arr = arr.reshape(n, cols // N_CHANNELS, N_CHANNELS)
    if arr.ndim != 3 or arr.shape[2] != N_CHANNELS:
        raise DataError(
            f"expected windows of shape (n, W, {N_CHANNELS}), got {arr.shape}"
        )
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DataError(f"empty window array of shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("windows contain non-finite values")
    if window_len is not None and arr.shape[1] != window_len:
        raise DataError(
            f"windows have length {arr.shape[1]}, the fitted model expects "
            f"{window_len}"
        )
    return arr


def check_binary_labels(y, n_samples: int) -> np.ndarray:
    """Coerce labels into a (n,) float64 array of 0/1.

    Accepts 0/1 numbers, booleans, Label members, and the strings
    'benign'/'malicious' (malicious maps to 1).
    """
    values = list(y)
    if len(values) != n_samples:
        raise DataError(f"{len(values)} labels for {n_samples} windows")
    out = np.empty(n_samples, dtype=np.float64)
    for i, item in enumerate(values):
        if isinstance(item, Label):
            out[i] = 1.0 if item is Label.MALICIOUS else 0.0
        elif isinstance(item, str):
            try:
                out[i] = 1.0 if Label(item) is Label.MALICIOUS else 0.0
            except ValueError:
                raise DataError(f"label {item!r} at index {i} is not valid") from None
        else:
            try:
                num = float(item)
            except (TypeError, ValueError):
                raise DataError(f"label {item!r} at index {i} is not valid") from None
            if num not in (0.0, 1.0):
                raise DataError(f"label {item!r} at index {i} is not 0 or 1")
            out[i] = num
    return out
