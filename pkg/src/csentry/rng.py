"""Deterministic random-stream construction.

All randomness in the package flows through Philox4x64-10 counter-based
generators (fixed multipliers, as shipped by numpy), keyed by a 128-bit
(seed, stream) pair. Given the same key, the produced stream is identical
across platforms and numpy releases that implement Philox, which is what
makes corpora and training runs byte-reproducible.

Stream ids partition independent uses of one logical seed, e.g. the benign
baseline draws and the attack overlay draws of a single trace.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Generator over a Philox stream keyed by (seed, stream_id)."""
    key = np.array([seed & MASK64, stream_id & MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
