"""The six comparable detector architectures.

Every model maps a normalized (W, 3) counter window to one probability of
the Malicious class, so the benchmark compares architectures on identical
inputs, splits, and seeds. The recurrent and convolutional families share
the same layer engine; only the composition differs:

- Mlp: Flatten -> Dense(3W, 64) -> ReLU -> Dense(64, 32) -> ReLU -> Dense(32, 1)
- Cnn: Conv1D(3, c, k) -> ReLU -> MaxPool(p) -> Conv1D(c, 2c, k) -> ReLU
  -> MaxPool(p) -> Flatten -> Dense(., 1)
- Rnn / Lstm / Gru: one recurrent layer (3 -> hidden), final hidden state
  -> Dense(hidden, 1)
- HybridCnnLstm: Conv1D(3, c, k) -> ReLU -> MaxPool(p) -> LSTM(c -> hidden),
  final hidden state -> Dense(hidden, 1)

followed by a sigmoid in all cases. Widths default to the desk-scale
values (c=16, k=3, p=2, hidden=32, MLP widths 64/32) that train on a CPU
in minutes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import rng
from .errors import ConfigError, NumericError, ShapeError
from .nn.layers import (
    GRU,
    LSTM,
    Conv1D,
    Dense,
    Flatten,
    Layer,
    MaxPool1D,
    ReLU,
    Sigmoid,
    SimpleRNN,
)

MLP_WIDTHS = (64, 32)

_STREAM_INIT = 2


class ModelKind(Enum):
    MLP = "Mlp"
    CNN = "Cnn"
    RNN = "Rnn"
    LSTM = "Lstm"
    GRU = "Gru"
    HYBRID_CNN_LSTM = "HybridCnnLstm"

    @classmethod
    def parse(cls, text: str) -> "ModelKind":
        wanted = text.strip().lower()
        for kind in cls:
            if kind.value.lower() == wanted:
                return kind
        raise ConfigError(
            f"unknown model kind {text!r}; expected one of "
            + ", ".join(k.value for k in cls)
        )


ALL_KINDS = tuple(ModelKind)


@dataclass(frozen=True)
class ModelSpec:
    """Architecture hyperparameters; identical across kinds for fairness."""

    kind: ModelKind
    window_len: int = 32
    in_channels: int = 3
    hidden: int = 32
    conv_channels: int = 16
    kernel: int = 3
    pool: int = 2
    seed: int = 0

    def __post_init__(self):
        for name in ("window_len", "in_channels", "hidden", "conv_channels",
                     "kernel", "pool"):
            if getattr(self, name) < 1:
                raise ConfigError(f"ModelSpec.{name} must be positive")


class Model:
    """A layer pipeline ending in one sigmoid probability."""

    def __init__(self, spec: ModelSpec, layers: list[Layer]):
        self.spec = spec
        self.layers = layers
        self._validate_chain()
        gen = rng.stream(spec.seed, _STREAM_INIT)
        for layer in self.layers:
            layer.init_params(gen)

    @property
    def kind(self) -> ModelKind:
        return self.spec.kind

    def _validate_chain(self):
        shape: tuple[int, ...] = (self.spec.window_len, self.spec.in_channels)
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.out_shape(shape)
            except ShapeError as err:
                raise ShapeError(
                    f"{self.kind.value}: invalid shape chain at stage "
                    f"{i} ({layer.name}): {err}"
                ) from None
        if shape != (1,):
            raise ShapeError(
                f"{self.kind.value}: pipeline output shape {shape}, expected (1,)"
            )

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Probabilities for a batch of windows: (B, W, 3) -> (B,)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1:] != (self.spec.window_len, self.spec.in_channels):
            raise ShapeError(
                f"{self.kind.value}: expected batch shape "
                f"(B, {self.spec.window_len}, {self.spec.in_channels}), got {x.shape}"
            )
        out = x
        for layer in self.layers:
            out = layer.forward(out)
        out = out[:, 0]
        if not np.isfinite(out).all():
            raise NumericError(f"{self.kind.value}: non-finite prediction")
        return out

    def backward(self, dprob: np.ndarray) -> None:
        """Populate every layer's grads from d(loss)/d(probability)."""
        grad = np.asarray(dprob, dtype=np.float64)[:, None]
        for layer in reversed(self.layers):
            grad = layer.backward(grad)

    def predict(self, window: np.ndarray) -> float:
        """Probability of Malicious for one (W, 3) window."""
        window = np.asarray(window, dtype=np.float64)
        if window.shape != (self.spec.window_len, self.spec.in_channels):
            raise ShapeError(
                f"{self.kind.value}: expected window shape "
                f"({self.spec.window_len}, {self.spec.in_channels}), got {window.shape}"
            )
        return float(self.forward(window[None])[0])

    def predict_batch(self, windows: np.ndarray) -> np.ndarray:
        return self.forward(windows)

    def params(self) -> dict[str, np.ndarray]:
        """Stable, uniquely named view of every parameter tensor."""
        out: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            for name, tensor in layer.params.items():
                out[f"{i}.{layer.name}.{name}"] = tensor
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            for name, tensor in layer.grads.items():
                out[f"{i}.{layer.name}.{name}"] = tensor
        return out

    def set_params(self, named: dict[str, np.ndarray]) -> None:
        """Load parameter tensors by name; names and shapes must match."""
        current = self.params()
        if set(named) != set(current):
            missing = sorted(set(current) - set(named))
            extra = sorted(set(named) - set(current))
            raise ShapeError(
                f"{self.kind.value}: parameter names do not match "
                f"(missing {missing}, unexpected {extra})"
            )
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                tensor = np.asarray(named[f"{i}.{layer.name}.{name}"], dtype=np.float64)
                if tensor.shape != layer.params[name].shape:
                    raise ShapeError(
                        f"{self.kind.value}: shape {tensor.shape} != "
                        f"{layer.params[name].shape} for parameter {i}.{layer.name}.{name}"
                    )
                layer.params[name] = tensor.copy()

    def clone_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params().items()}

    def param_count(self) -> int:
        return sum(p.size for p in self.params().values())


def _layers_for(spec: ModelSpec) -> list[Layer]:
    w, c_in = spec.window_len, spec.in_channels
    c, k, p, h = spec.conv_channels, spec.kernel, spec.pool, spec.hidden
    kind = spec.kind
    if kind is ModelKind.MLP:
        w1, w2 = MLP_WIDTHS
        return [
            Flatten(),
            Dense(w * c_in, w1), ReLU(),
            Dense(w1, w2), ReLU(),
            Dense(w2, 1), Sigmoid(),
        ]
    if kind is ModelKind.CNN:
        t1 = (w - k + 1) // p
        t2 = (t1 - k + 1) // p
        return [
            Conv1D(c_in, c, k), ReLU(), MaxPool1D(p),
            Conv1D(c, 2 * c, k), ReLU(), MaxPool1D(p),
            Flatten(),
            Dense(max(t2, 1) * 2 * c, 1), Sigmoid(),
        ]
    if kind is ModelKind.RNN:
        return [SimpleRNN(c_in, h), Dense(h, 1), Sigmoid()]
    if kind is ModelKind.LSTM:
        return [LSTM(c_in, h), Dense(h, 1), Sigmoid()]
    if kind is ModelKind.GRU:
        return [GRU(c_in, h), Dense(h, 1), Sigmoid()]
    if kind is ModelKind.HYBRID_CNN_LSTM:
        return [
            Conv1D(c_in, c, k), ReLU(), MaxPool1D(p),
            LSTM(c, h), Dense(h, 1), Sigmoid(),
        ]
    raise ConfigError(f"unknown model kind {kind!r}")


def build(spec: ModelSpec) -> Model:
    """Construct and initialize the architecture for spec.kind.

    Raises ShapeError naming the failing stage when the window is too
    short for the convolution/pooling chain.
    """
    return Model(spec, _layers_for(spec))
