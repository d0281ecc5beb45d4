"""Domain model for hardware-performance-counter traces.

A trace is a per-process time series of three counter readings per sampling
interval (instructions, LLC-loads, LLC-load-misses), labeled benign or
malicious for one attack/victim scenario. Traces are cut into fixed-length
windows which, after z-score normalization, are the classification
instances consumed by the models.

Everything here is immutable after construction; the operations are pure
functions, so traces and datasets can be shared freely across threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import InitVar, dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import BalanceError, ConfigError, DataError, StratificationError
from . import rng

N_CHANNELS = 3
CHANNEL_NAMES = ("instructions", "llc_loads", "llc_load_misses")

# Relative deviation of a sampling interval from the median interval above
# which the trace is flagged as irregular.
INTERVAL_JITTER_TOLERANCE = 0.5

_SPLIT_STREAM = 0xD5


class Label(Enum):
    """Binary class of a trace or window; MALICIOUS is the positive class."""

    BENIGN = "benign"
    MALICIOUS = "malicious"


class Attack(Enum):
    FLUSH_RELOAD = "flush_reload"
    PRIME_PROBE = "prime_probe"


class Victim(Enum):
    AES = "aes"
    RSA = "rsa"


class Source(Enum):
    SYNTHETIC = "synthetic"
    INGESTED = "ingested"


@dataclass(frozen=True)
class Scenario:
    """One attack/victim combination; there are exactly four."""

    attack: Attack
    victim: Victim

    @property
    def key(self) -> str:
        return f"{self.attack.value}:{self.victim.value}"

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        """Parse 'flush_reload:aes'-style selectors."""
        try:
            attack_s, victim_s = text.strip().lower().split(":")
            return cls(Attack(attack_s), Victim(victim_s))
        except (ValueError, KeyError):
            raise ConfigError(
                f"invalid scenario {text!r}; expected "
                "<flush_reload|prime_probe>:<aes|rsa>"
            ) from None


ALL_SCENARIOS = tuple(Scenario(a, v) for a in Attack for v in Victim)


@dataclass(frozen=True)
class HpcSample:
    """Counter readings of one sampling interval.

    ``t`` is seconds since trace start. Counters are per-interval counts;
    they are kept as floats because ingested logs may contain scaled
    (multiplexed) readings.
    """

    t: float
    instructions: float
    llc_loads: float
    llc_load_misses: float


@dataclass(frozen=True, eq=False)
class Trace:
    """Labeled counter time series of a single process run.

    Construction validates hard invariants (finite non-negative counters,
    strictly increasing timestamps) and records soft ones in ``flags``:
    ingested data may legitimately report more misses than loads (PMU
    multiplexing artifacts) or jittery sampling intervals, and is kept
    rather than rejected. Synthetic traces must satisfy misses <= loads.
    """

    samples: tuple[HpcSample, ...]
    label: Label
    scenario: Scenario
    source: Source
    process_id: int | None = None
    trace_id: int | None = None
    extra_flags: InitVar[tuple[str, ...]] = ()
    flags: tuple[str, ...] = field(init=False, default=())

    def __post_init__(self, extra_flags: tuple[str, ...] = ()):
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise DataError("trace has no samples")
        flags = list(extra_flags)
        prev_t = -np.inf
        miss_over_loads = 0
        for i, s in enumerate(self.samples):
            vals = (s.t, s.instructions, s.llc_loads, s.llc_load_misses)
            if not all(np.isfinite(v) for v in vals):
                raise DataError(f"non-finite value in sample {i} of {self._ident()}")
            if s.t < 0 or min(vals[1:]) < 0:
                raise DataError(f"negative value in sample {i} of {self._ident()}")
            if s.t <= prev_t:
                raise DataError(
                    f"timestamps not strictly increasing at sample {i} of {self._ident()}"
                )
            prev_t = s.t
            if s.llc_load_misses > s.llc_loads:
                miss_over_loads += 1
        if miss_over_loads:
            if self.source is Source.SYNTHETIC:
                raise DataError(
                    f"{self._ident()}: llc_load_misses > llc_loads in "
                    f"{miss_over_loads} synthetic samples"
                )
            flags.append(f"miss_gt_loads:{miss_over_loads}")
        if len(self.samples) >= 3:
            dt = np.diff([s.t for s in self.samples])
            med = float(np.median(dt))
            if med > 0 and float(np.max(np.abs(dt - med))) > INTERVAL_JITTER_TOLERANCE * med:
                flags.append("irregular_interval")
        object.__setattr__(self, "flags", tuple(flags))

    def _ident(self) -> str:
        if self.trace_id is not None:
            return f"trace {self.trace_id}"
        if self.process_id is not None:
            return f"trace pid={self.process_id}"
        return "trace"

    def __len__(self) -> int:
        return len(self.samples)

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples], dtype=np.float64)

    def counters(self) -> np.ndarray:
        """Counter matrix of shape (n, 3), columns per CHANNEL_NAMES."""
        return np.array(
            [(s.instructions, s.llc_loads, s.llc_load_misses) for s in self.samples],
            dtype=np.float64,
        )

    def content_digest(self) -> str:
        """SHA-256 over label, scenario and sample values.

        Used as the stable sort key that makes dataset splitting invariant
        to the order traces are supplied in.
        """
        h = hashlib.sha256()
        h.update(f"{self.label.value}|{self.scenario.key}|{self.source.value}".encode())
        h.update(self.times().tobytes())
        h.update(self.counters().tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class Window:
    """One classification instance: a (W, 3) slice of a trace's counters."""

    values: np.ndarray
    label: Label

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != N_CHANNELS:
            raise DataError(f"window values must have shape (W, 3), got {v.shape}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class NormStats:
    """Per-channel normalization statistics (population std, zeros -> 1)."""

    mean: tuple[float, float, float]
    std: tuple[float, float, float]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Windows split into train/test with train-derived normalization.

    The full set must be class-balanced to 50% +/- 1%, and train/test come
    from disjoint traces, both checked at construction.
    """

    train: tuple[Window, ...]
    test: tuple[Window, ...]
    norm_stats: NormStats
    window_len: int
    scenario: Scenario
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "test", tuple(self.test))
        for w in self.train + self.test:
            if w.values.shape[0] != self.window_len:
                raise DataError(
                    f"window length {w.values.shape[0]} != dataset window_len "
                    f"{self.window_len}"
                )
        labels = [w.label for w in self.train + self.test]
        if not labels:
            raise DataError("dataset has no windows")
        frac = sum(1 for l in labels if l is Label.MALICIOUS) / len(labels)
        if abs(frac - 0.5) > 0.01:
            raise BalanceError(
                f"class balance {100 * frac:.2f}% malicious is outside 50% +/- 1%"
            )


def make_windows(trace: Trace, window_len: int, stride: int) -> list[Window]:
    """Cut a trace into contiguous windows carrying the trace's label.

    Returns floor((len - window_len)/stride) + 1 windows in trace order.
    Raises DataError when the trace is shorter than one window.
    """
    if window_len < 1 or stride < 1:
        raise DataError("window_len and stride must be positive")
    n = len(trace)
    if n < window_len:
        raise DataError(
            f"{trace._ident()} has {n} samples, shorter than window_len {window_len}"
        )
    values = trace.counters()
    count = (n - window_len) // stride + 1
    return [
        Window(values[i * stride : i * stride + window_len], trace.label)
        for i in range(count)
    ]


def compute_norm_stats(windows: Sequence[Window]) -> NormStats:
    """Per-channel mean and population standard deviation; std 0 becomes 1."""
    if not windows:
        raise DataError("cannot compute normalization stats from zero windows")
    stacked = np.concatenate([w.values for w in windows], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)  # population std (ddof=0)
    std = np.where(std == 0.0, 1.0, std)
    return NormStats(mean=tuple(float(m) for m in mean), std=tuple(float(s) for s in std))


def normalize(
    windows: Sequence[Window], stats: NormStats | None = None
) -> tuple[list[Window], NormStats]:
    """Z-score windows per channel; stats default to ones computed here.

    Passing training-split stats keeps test data leakage-free. Non-finite
    inputs are rejected with the offending window and channel named.
    """
    for i, w in enumerate(windows):
        finite = np.isfinite(w.values)
        if not finite.all():
            ch = int(np.argwhere(~finite)[0][1])
            raise DataError(
                f"non-finite value in window {i}, channel {CHANNEL_NAMES[ch]}"
            )
    if stats is None:
        stats = compute_norm_stats(windows)
    mean = np.array(stats.mean)
    std = np.array(stats.std)
    out = [Window((w.values - mean) / std, w.label) for w in windows]
    return out, stats


def denormalize(windows: Sequence[Window], stats: NormStats) -> list[Window]:
    """Inverse of normalize() under the same stats."""
    mean = np.array(stats.mean)
    std = np.array(stats.std)
    return [Window(w.values * std + mean, w.label) for w in windows]


def split_dataset(
    traces: Sequence[Trace],
    test_fraction: float,
    window_len: int,
    stride: int,
    seed: int,
) -> Dataset:
    """Stratified trace-level split, then windowing and normalization.

    Traces are ordered by content digest and shuffled by ``seed``, so the
    split is deterministic and invariant to input order. The split happens
    at trace granularity: no windows of one trace appear in both splits.
    Normalization statistics come from the training windows only.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if not traces:
        raise DataError("no traces to split")
    scenarios = {t.scenario for t in traces}
    if len(scenarios) > 1:
        raise DataError(
            "traces span multiple scenarios: "
            + ", ".join(sorted(s.key for s in scenarios))
        )
    by_label: dict[Label, list[Trace]] = {Label.BENIGN: [], Label.MALICIOUS: []}
    for t in traces:
        by_label[t.label].append(t)
    for lab, group in by_label.items():
        if len(group) < 2:
            raise StratificationError(
                f"need at least 2 {lab.value} traces to populate both splits, "
                f"got {len(group)}"
            )

    gen = rng.stream(seed, _SPLIT_STREAM)
    train_traces: list[Trace] = []
    test_traces: list[Trace] = []
    for lab in (Label.BENIGN, Label.MALICIOUS):
        group = sorted(by_label[lab], key=Trace.content_digest)
        order = gen.permutation(len(group))
        shuffled = [group[i] for i in order]
        n_test = int(np.floor(test_fraction * len(group) + 0.5))
        n_test = min(max(n_test, 1), len(group) - 1)
        test_traces.extend(shuffled[:n_test])
        train_traces.extend(shuffled[n_test:])

    train_raw = [w for t in train_traces for w in make_windows(t, window_len, stride)]
    test_raw = [w for t in test_traces for w in make_windows(t, window_len, stride)]
    train_windows, stats = normalize(train_raw)
    test_windows, _ = normalize(test_raw, stats)
    return Dataset(
        train=tuple(train_windows),
        test=tuple(test_windows),
        norm_stats=stats,
        window_len=window_len,
        scenario=next(iter(scenarios)),
        seed=seed,
    )


def windows_to_arrays(windows: Iterable[Window]) -> tuple[np.ndarray, np.ndarray]:
    """Stack windows into (X, y) arrays; y is 1 for MALICIOUS."""
    ws = list(windows)
    if not ws:
        raise DataError("no windows")
    X = np.stack([w.values for w in ws]).astype(np.float64)
    y = np.array([1.0 if w.label is Label.MALICIOUS else 0.0 for w in ws])
    return X, y
