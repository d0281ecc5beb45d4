"""Adam optimizer over named parameter dictionaries."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


class Adam:
    """Standard Adam with bias correction, updating parameters in place.

    State (first/second moment estimates and the step counter) is keyed by
    parameter name, so the same instance must always see the same named
    set. Updates are elementwise and deterministic.
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """One update of every named parameter from its named gradient."""
        missing = set(params) - set(grads)
        if missing:
            raise ShapeError(f"no gradient for parameters {sorted(missing)}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeError(
                    f"gradient shape {g.shape} != parameter shape {p.shape} "
                    f"for {name!r}"
                )
            if name not in self._m:
                self._m[name] = np.zeros_like(p)
                self._v[name] = np.zeros_like(p)
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
