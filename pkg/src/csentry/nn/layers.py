"""Neural-network layers with explicit forward/backward passes.

Every layer computes its own analytic gradients; there is no autodiff
graph. Arrays are float64 throughout: the gradient checks in the test
suite compare against central finite differences at 1e-4 relative
tolerance, which single precision cannot meet reliably.

Layers operate on batches (leading axis B). Sequence layers take
(B, T, C) with channels last, flat layers take (B, F); a single instance
without the batch axis is accepted and returned without it. Forward
caches whatever backward needs; calling backward without a matching
forward, or twice for one forward, is a usage error.

Non-finite values are not checked per layer: NaN/Inf propagate through
every operation here, so the model boundary and the training loss detect
them once per pass.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError, UsageError

GLOROT_GAIN = 6.0


def glorot_uniform(gen: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform(-a, a) with a = sqrt(6/(fan_in+fan_out))."""
    bound = np.sqrt(GLOROT_GAIN / (fan_in + fan_out))
    return gen.uniform(-bound, bound, size=shape)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Layer:
    """Base: named parameters, named gradients, one cached forward."""

    #: batched input rank: 2 for (B, F) layers, 3 for (B, T, C) layers,
    #: None for elementwise layers that accept any shape
    input_ndim: int | None = None

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    @property
    def name(self) -> str:
        return type(self).__name__

    def init_params(self, gen: np.random.Generator) -> None:
        """Draw weights (Glorot uniform) and set biases; default: no params."""

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        """Unbatched output shape for an unbatched input shape."""
        raise NotImplementedError

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        squeeze = False
        if self.input_ndim is not None:
            if x.ndim == self.input_ndim - 1:
                x = x[None]
                squeeze = True
            elif x.ndim != self.input_ndim:
                raise ShapeError(
                    f"{self.name}: expected {self.input_ndim - 1}- or "
                    f"{self.input_ndim}-dimensional input, got shape {x.shape}"
                )
        out = self._forward(x)
        self._squeeze = squeeze
        return out[0] if squeeze else out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise UsageError(f"{self.name}.backward called without a cached forward")
        dout = np.asarray(dout, dtype=np.float64)
        if self._squeeze:
            dout = dout[None]
        dx = self._backward(dout)
        self._cache = None
        return dx[0] if self._squeeze else dx

    def _forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Dense(Layer):
    """Affine map (B, F_in) -> (B, F_out)."""

    input_ndim = 2

    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        if in_features < 1 or out_features < 1:
            raise ShapeError(f"Dense: feature counts must be positive, got "
                             f"({in_features}, {out_features})")
        self.in_features = in_features
        self.out_features = out_features
        self.params = {
            "W": np.zeros((in_features, out_features)),
            "b": np.zeros(out_features),
        }

    def init_params(self, gen):
        self.params["W"] = glorot_uniform(
            gen, (self.in_features, self.out_features), self.in_features, self.out_features
        )
        self.params["b"] = np.zeros(self.out_features)

    def out_shape(self, in_shape):
        if in_shape != (self.in_features,):
            raise ShapeError(
                f"Dense: expected input shape ({self.in_features},), got {in_shape}"
            )
        return (self.out_features,)

    def _forward(self, x):
        if x.shape[1] != self.in_features:
            raise ShapeError(
                f"Dense: expected {self.in_features} features, got shape {x.shape}"
            )
        self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def _backward(self, dout):
        x = self._cache
        self.grads = {"W": x.T @ dout, "b": dout.sum(axis=0)}
        return dout @ self.params["W"].T


class ReLU(Layer):
    input_ndim = None

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._cache = x > 0
        return np.where(self._cache, x, 0.0)

    def backward(self, dout):
        if self._cache is None:
            raise UsageError("ReLU.backward called without a cached forward")
        dx = np.where(self._cache, np.asarray(dout, dtype=np.float64), 0.0)
        self._cache = None
        return dx


class Sigmoid(Layer):
    input_ndim = None

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        out = sigmoid(np.asarray(x, dtype=np.float64))
        self._cache = out
        return out

    def backward(self, dout):
        if self._cache is None:
            raise UsageError("Sigmoid.backward called without a cached forward")
        out = self._cache
        self._cache = None
        return np.asarray(dout, dtype=np.float64) * out * (1.0 - out)


class Tanh(Layer):
    input_ndim = None

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        out = np.tanh(np.asarray(x, dtype=np.float64))
        self._cache = out
        return out

    def backward(self, dout):
        if self._cache is None:
            raise UsageError("Tanh.backward called without a cached forward")
        out = self._cache
        self._cache = None
        return np.asarray(dout, dtype=np.float64) * (1.0 - out * out)


class Flatten(Layer):
    """(B, T, C) -> (B, T*C)."""

    input_ndim = 3

    def out_shape(self, in_shape):
        if len(in_shape) != 2:
            raise ShapeError(f"Flatten: expected rank-2 input shape, got {in_shape}")
        return (in_shape[0] * in_shape[1],)

    def _forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def _backward(self, dout):
        return dout.reshape(self._cache)


class Conv1D(Layer):
    """Valid cross-correlation, stride 1: (B, T, C_in) -> (B, T-k+1, C_out)."""

    input_ndim = 3

    def __init__(self, in_channels: int, out_channels: int, kernel: int):
        super().__init__()
        if min(in_channels, out_channels, kernel) < 1:
            raise ShapeError(
                f"Conv1D: channels and kernel must be positive, got "
                f"({in_channels}, {out_channels}, k={kernel})"
            )
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.params = {
            "W": np.zeros((out_channels, in_channels, kernel)),
            "b": np.zeros(out_channels),
        }

    def init_params(self, gen):
        fan_in = self.in_channels * self.kernel
        fan_out = self.out_channels * self.kernel
        self.params["W"] = glorot_uniform(
            gen, (self.out_channels, self.in_channels, self.kernel), fan_in, fan_out
        )
        self.params["b"] = np.zeros(self.out_channels)

    def out_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[1] != self.in_channels:
            raise ShapeError(
                f"Conv1D: expected input shape (T, {self.in_channels}), got {in_shape}"
            )
        t_out = in_shape[0] - self.kernel + 1
        if t_out < 1:
            raise ShapeError(
                f"Conv1D: sequence length {in_shape[0]} shorter than kernel {self.kernel}"
            )
        return (t_out, self.out_channels)

    def _forward(self, x):
        self.out_shape(x.shape[1:])
        # windows[b, t, c, j] = x[b, t+j, c]
        windows = sliding_window_view(x, self.kernel, axis=1)
        self._cache = windows
        return np.einsum("btcj,ocj->bto", windows, self.params["W"]) + self.params["b"]

    def _backward(self, dout):
        windows = self._cache
        w = self.params["W"]
        self.grads = {
            "W": np.einsum("btcj,bto->ocj", windows, dout),
            "b": dout.sum(axis=(0, 1)),
        }
        batch, t_out = dout.shape[0], dout.shape[1]
        dx = np.zeros((batch, t_out + self.kernel - 1, self.in_channels))
        for j in range(self.kernel):
            dx[:, j : j + t_out, :] += np.einsum("bto,oc->btc", dout, w[:, :, j])
        return dx


class MaxPool1D(Layer):
    """Non-overlapping max pool: (B, T, C) -> (B, floor(T/p), C).

    Gradient routes to the first occurrence of the maximum within each
    pool; trailing samples beyond the last full pool are discarded.
    """

    input_ndim = 3

    def __init__(self, pool: int):
        super().__init__()
        if pool < 1:
            raise ShapeError(f"MaxPool1D: pool size must be positive, got {pool}")
        self.pool = pool

    def out_shape(self, in_shape):
        if len(in_shape) != 2:
            raise ShapeError(f"MaxPool1D: expected rank-2 input shape, got {in_shape}")
        t_out = in_shape[0] // self.pool
        if t_out < 1:
            raise ShapeError(
                f"MaxPool1D: sequence length {in_shape[0]} shorter than pool {self.pool}"
            )
        return (t_out, in_shape[1])

    def _forward(self, x):
        self.out_shape(x.shape[1:])
        batch, t, ch = x.shape
        t_out = t // self.pool
        blocks = x[:, : t_out * self.pool, :].reshape(batch, t_out, self.pool, ch)
        idx = blocks.argmax(axis=2)
        self._cache = (x.shape, idx)
        return np.take_along_axis(blocks, idx[:, :, None, :], axis=2)[:, :, 0, :]

    def _backward(self, dout):
        (batch, t, ch), idx = self._cache
        t_out = t // self.pool
        blocks = np.zeros((batch, t_out, self.pool, ch))
        np.put_along_axis(blocks, idx[:, :, None, :], dout[:, :, None, :], axis=2)
        dx = np.zeros((batch, t, ch))
        dx[:, : t_out * self.pool, :] = blocks.reshape(batch, t_out * self.pool, ch)
        return dx


class _Recurrent(Layer):
    """Shared plumbing of the recurrent layers.

    ``return_sequences`` selects the full hidden sequence (B, T, H) as the
    output; the default is the final hidden state (B, H). Both are exposed
    after every forward via ``hidden_seq`` and ``final_state``. h_0 = 0.
    Backward is backpropagation through time over the whole sequence.
    """

    input_ndim = 3

    def __init__(self, in_dim: int, hidden: int, return_sequences: bool = False):
        super().__init__()
        if in_dim < 1 or hidden < 1:
            raise ShapeError(
                f"{self.name}: dimensions must be positive, got ({in_dim}, {hidden})"
            )
        self.in_dim = in_dim
        self.hidden = hidden
        self.return_sequences = return_sequences
        self.hidden_seq: np.ndarray | None = None
        self.final_state: np.ndarray | None = None

    #: number of stacked gate blocks in the weight matrices
    n_gates = 1

    def init_params(self, gen):
        h, g = self.hidden, self.n_gates
        self.params = {
            "Wx": glorot_uniform(gen, (self.in_dim, g * h), self.in_dim, g * h),
            "Wh": glorot_uniform(gen, (h, g * h), h, g * h),
            "b": np.zeros(g * h),
        }
        self._init_bias()

    def _init_bias(self):
        pass

    def out_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[1] != self.in_dim:
            raise ShapeError(
                f"{self.name}: expected input shape (T, {self.in_dim}), got {in_shape}"
            )
        if in_shape[0] < 1:
            raise ShapeError(f"{self.name}: empty sequence")
        if self.return_sequences:
            return (in_shape[0], self.hidden)
        return (self.hidden,)

    def _expand_dout(self, dout: np.ndarray, batch: int, t: int) -> np.ndarray:
        """Upstream gradient as (B, T, H) regardless of output mode."""
        if self.return_sequences:
            return dout
        full = np.zeros((batch, t, self.hidden))
        full[:, -1, :] = dout
        return full


class SimpleRNN(_Recurrent):
    """Elman cell: h_t = tanh(x_t Wx + h_{t-1} Wh + b)."""

    n_gates = 1

    def _forward(self, x):
        self.out_shape(x.shape[1:])
        batch, t, _ = x.shape
        wx, wh, b = self.params["Wx"], self.params["Wh"], self.params["b"]
        hs = np.zeros((batch, t + 1, self.hidden))
        for step in range(t):
            hs[:, step + 1] = np.tanh(x[:, step] @ wx + hs[:, step] @ wh + b)
        self._cache = (x, hs)
        self.hidden_seq = hs[:, 1:]
        self.final_state = hs[:, -1]
        return self.hidden_seq if self.return_sequences else self.final_state

    def _backward(self, dout):
        x, hs = self._cache
        batch, t, _ = x.shape
        wx, wh = self.params["Wx"], self.params["Wh"]
        dout = self._expand_dout(dout, batch, t)
        d_wx = np.zeros_like(wx)
        d_wh = np.zeros_like(wh)
        d_b = np.zeros_like(self.params["b"])
        dx = np.zeros_like(x)
        dh_next = np.zeros((batch, self.hidden))
        for step in range(t - 1, -1, -1):
            dh = dh_next + dout[:, step]
            dz = dh * (1.0 - hs[:, step + 1] ** 2)
            d_wx += x[:, step].T @ dz
            d_wh += hs[:, step].T @ dz
            d_b += dz.sum(axis=0)
            dx[:, step] = dz @ wx.T
            dh_next = dz @ wh.T
        self.grads = {"Wx": d_wx, "Wh": d_wh, "b": d_b}
        return dx


class LSTM(_Recurrent):
    """Standard 4-gate cell; gate order in the stacked weights is i, f, g, o.

    z = x_t Wx + h_{t-1} Wh + b; i, f, o pass through the logistic
    function, candidate g through tanh; c_t = f*c_{t-1} + i*g and
    h_t = o*tanh(c_t). The forget-gate bias initializes to +1 so early
    training does not erase the cell state.
    """

    n_gates = 4

    def _init_bias(self):
        h = self.hidden
        self.params["b"][h : 2 * h] = 1.0

    def _forward(self, x):
        self.out_shape(x.shape[1:])
        batch, t, _ = x.shape
        h = self.hidden
        wx, wh, b = self.params["Wx"], self.params["Wh"], self.params["b"]
        hs = np.zeros((batch, t + 1, h))
        cs = np.zeros((batch, t + 1, h))
        gates = np.zeros((batch, t, 4 * h))
        for step in range(t):
            z = x[:, step] @ wx + hs[:, step] @ wh + b
            i = sigmoid(z[:, :h])
            f = sigmoid(z[:, h : 2 * h])
            g = np.tanh(z[:, 2 * h : 3 * h])
            o = sigmoid(z[:, 3 * h :])
            cs[:, step + 1] = f * cs[:, step] + i * g
            hs[:, step + 1] = o * np.tanh(cs[:, step + 1])
            gates[:, step] = np.concatenate([i, f, g, o], axis=1)
        self._cache = (x, hs, cs, gates)
        self.hidden_seq = hs[:, 1:]
        self.final_state = hs[:, -1]
        return self.hidden_seq if self.return_sequences else self.final_state

    def _backward(self, dout):
        x, hs, cs, gates = self._cache
        batch, t, _ = x.shape
        h = self.hidden
        wx, wh = self.params["Wx"], self.params["Wh"]
        dout = self._expand_dout(dout, batch, t)
        d_wx = np.zeros_like(wx)
        d_wh = np.zeros_like(wh)
        d_b = np.zeros_like(self.params["b"])
        dx = np.zeros_like(x)
        dh_next = np.zeros((batch, h))
        dc_next = np.zeros((batch, h))
        for step in range(t - 1, -1, -1):
            i = gates[:, step, :h]
            f = gates[:, step, h : 2 * h]
            g = gates[:, step, 2 * h : 3 * h]
            o = gates[:, step, 3 * h :]
            tc = np.tanh(cs[:, step + 1])
            dh = dh_next + dout[:, step]
            d_o = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            d_i = dc * g
            d_f = dc * cs[:, step]
            d_g = dc * i
            dz = np.concatenate(
                [
                    d_i * i * (1.0 - i),
                    d_f * f * (1.0 - f),
                    d_g * (1.0 - g * g),
                    d_o * o * (1.0 - o),
                ],
                axis=1,
            )
            d_wx += x[:, step].T @ dz
            d_wh += hs[:, step].T @ dz
            d_b += dz.sum(axis=0)
            dx[:, step] = dz @ wx.T
            dh_next = dz @ wh.T
            dc_next = dc * f
        self.grads = {"Wx": d_wx, "Wh": d_wh, "b": d_b}
        return dx


class GRU(_Recurrent):
    """Standard 2-gate cell; gate order in the stacked weights is z, r, n.

    Update z and reset r pass through the logistic function; the candidate
    n = tanh(x_t Wx_n + (r*h_{t-1}) Wh_n + b_n) sees the reset-scaled
    previous state; h_t = (1-z)*n + z*h_{t-1}.
    """

    n_gates = 3

    def _forward(self, x):
        self.out_shape(x.shape[1:])
        batch, t, _ = x.shape
        h = self.hidden
        wx, wh, b = self.params["Wx"], self.params["Wh"], self.params["b"]
        hs = np.zeros((batch, t + 1, h))
        gates = np.zeros((batch, t, 3 * h))
        for step in range(t):
            a = x[:, step] @ wx + b
            hz = hs[:, step] @ wh[:, : 2 * h]
            z = sigmoid(a[:, :h] + hz[:, :h])
            r = sigmoid(a[:, h : 2 * h] + hz[:, h:])
            n = np.tanh(a[:, 2 * h :] + (r * hs[:, step]) @ wh[:, 2 * h :])
            hs[:, step + 1] = (1.0 - z) * n + z * hs[:, step]
            gates[:, step] = np.concatenate([z, r, n], axis=1)
        self._cache = (x, hs, gates)
        self.hidden_seq = hs[:, 1:]
        self.final_state = hs[:, -1]
        return self.hidden_seq if self.return_sequences else self.final_state

    def _backward(self, dout):
        x, hs, gates = self._cache
        batch, t, _ = x.shape
        h = self.hidden
        wx, wh = self.params["Wx"], self.params["Wh"]
        dout = self._expand_dout(dout, batch, t)
        d_wx = np.zeros_like(wx)
        d_wh = np.zeros_like(wh)
        d_b = np.zeros_like(self.params["b"])
        dx = np.zeros_like(x)
        dh_next = np.zeros((batch, h))
        for step in range(t - 1, -1, -1):
            z = gates[:, step, :h]
            r = gates[:, step, h : 2 * h]
            n = gates[:, step, 2 * h :]
            h_prev = hs[:, step]
            dh = dh_next + dout[:, step]
            d_z = dh * (h_prev - n)
            d_n = dh * (1.0 - z)
            dh_prev = dh * z
            da_n = d_n * (1.0 - n * n)
            d_rh = da_n @ wh[:, 2 * h :].T
            d_r = d_rh * h_prev
            dh_prev += d_rh * r
            da_z = d_z * z * (1.0 - z)
            da_r = d_r * r * (1.0 - r)
            da_zr = np.concatenate([da_z, da_r], axis=1)
            da = np.concatenate([da_z, da_r, da_n], axis=1)
            d_wx += x[:, step].T @ da
            d_b += da.sum(axis=0)
            d_wh[:, : 2 * h] += h_prev.T @ da_zr
            d_wh[:, 2 * h :] += (r * h_prev).T @ da_n
            dx[:, step] = da @ wx.T
            dh_next = dh_prev + da_zr @ wh[:, : 2 * h].T
        self.grads = {"Wx": d_wx, "Wh": d_wh, "b": d_b}
        return dx
