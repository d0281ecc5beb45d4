"""Ingestion of interval-mode performance-counter logs.

Reads the CSV produced by the OS profiler's interval mode, e.g.

    perf stat -x , -I 10 -e instructions,LLC-loads,LLC-load-misses -p <pid>

where each line reports one counter over one sampling interval:

    time,value,unit,event[,run-time,multiplex-pct,...]

Parsing and assembly are split: ``parse_perf_csv`` turns raw text into flat
records, ``assemble_trace`` groups records into per-interval samples. The
library never invokes the profiler itself; it only consumes its logs.

Incomplete intervals (a counter missing, ``<not counted>``, duplicated
readings) are dropped and counted rather than interpolated: made-up counter
values would be indistinguishable from signal downstream.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ParseError, UnusableLogError
from .traces import HpcSample, Label, Scenario, Source, Trace

# Canonical event names, in channel order.
REQUIRED_EVENTS = ("instructions", "LLC-loads", "LLC-load-misses")

# Sentinel value tokens emitted when the PMU could not schedule a counter.
MISSING_TOKENS = frozenset({"<not counted>", "<not supported>"})

# PMU event spellings vary across kernels; extend via the aliases argument.
DEFAULT_EVENT_ALIASES = {
    "cpu_core/instructions/": "instructions",
    "cpu_core/LLC-loads/": "LLC-loads",
    "cpu_core/LLC-load-misses/": "LLC-load-misses",
    "longest_lat_cache.reference": "LLC-loads",
    "longest_lat_cache.miss": "LLC-load-misses",
}

# Readings within this fraction of the median sampling interval belong to
# the same time bucket; interval logs jitter by scheduling latency.
BUCKET_TOLERANCE = 0.01


@dataclass(frozen=True)
class PerfRecord:
    """One counter reading over one sampling interval.

    ``value`` is None when the profiler printed a not-counted/not-supported
    token; ``multiplex_pct`` is the percentage of the interval the counter
    was actually scheduled, when the log carries it.
    """

    t: float
    value: float | None
    unit: str
    event: str
    multiplex_pct: float | None = None

    def __post_init__(self):
        if not self.event:
            raise DataError("PerfRecord event name must be non-empty")


@dataclass(frozen=True)
class ParseOutcome(Sequence):
    """Sequence of parsed records plus the lines skipped in lenient mode."""

    records: tuple[PerfRecord, ...]
    skipped: tuple[tuple[int, str, str], ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


def _parse_line(line_no: int, raw: str, delimiter: str) -> PerfRecord:
    fields = raw.split(delimiter)
    if len(fields) < 4:
        raise ParseError(line_no, raw, f"expected at least 4 fields, got {len(fields)}")
    try:
        t = float(fields[0].strip())
    except ValueError:
        raise ParseError(line_no, raw, f"unparseable time field {fields[0].strip()!r}") from None
    value_token = fields[1].strip()
    if value_token in MISSING_TOKENS:
        value: float | None = None
    else:
        try:
            value = float(value_token)
        except ValueError:
            raise ParseError(
                line_no, raw, f"unparseable value field {value_token!r}"
            ) from None
    event = fields[3].strip()
    if not event:
        raise ParseError(line_no, raw, "empty event name")
    multiplex_pct = None
    if len(fields) >= 6:
        try:
            multiplex_pct = float(fields[5].strip().rstrip("%"))
        except ValueError:
            multiplex_pct = None
    return PerfRecord(
        t=t, value=value, unit=fields[2].strip(), event=event, multiplex_pct=multiplex_pct
    )


def parse_perf_csv(text: str, delimiter: str = ",", lenient: bool = False) -> ParseOutcome:
    """Parse interval-mode profiler CSV into records.

    Comment lines (starting with ``#``) and blank lines yield no records.
    A malformed line raises ParseError with its line number; in lenient
    mode it is skipped and reported in ``skipped`` instead. ``float``
    parsing is locale-independent by construction.
    """
    records: list[PerfRecord] = []
    skipped: list[tuple[int, str, str]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            records.append(_parse_line(line_no, raw, delimiter))
        except ParseError as err:
            if not lenient:
                raise
            skipped.append((line_no, raw, err.reason))
    return ParseOutcome(records=tuple(records), skipped=tuple(skipped))


def render_perf_csv(records: Sequence[PerfRecord], delimiter: str = ",") -> str:
    """Serialize records back to the profiler's CSV shape (inverse of parse)."""
    lines = []
    for r in records:
        if r.value is None:
            value = "<not counted>"
        elif float(r.value).is_integer():
            value = str(int(r.value))
        else:
            value = repr(r.value)
        fields = [repr(r.t), value, r.unit, r.event]
        if r.multiplex_pct is not None:
            fields += ["", f"{r.multiplex_pct:.2f}"]
        lines.append(delimiter.join(fields))
    return "\n".join(lines) + ("\n" if lines else "")


def _median_interval(by_event: dict[str, list[PerfRecord]]) -> float:
    diffs: list[float] = []
    for recs in by_event.values():
        ts = sorted(r.t for r in recs)
        diffs.extend(float(b - a) for a, b in zip(ts, ts[1:]))
    positive = [d for d in diffs if d > 0]
    if not positive:
        raise UnusableLogError(
            "cannot estimate the sampling interval: no event has two readings"
        )
    return float(np.median(positive))


def assemble_trace(
    records: Sequence[PerfRecord],
    label: Label,
    scenario: Scenario,
    aliases: dict[str, str] | None = None,
    process_id: int | None = None,
    trace_id: int | None = None,
) -> Trace:
    """Group records into per-interval samples and build an ingested Trace.

    Records are bucketed by time with a tolerance of 1% of the median
    sampling interval, so assembly is invariant to record order. Buckets
    missing any required event, containing a Missing value, or containing
    duplicate readings of one event are dropped; a nonzero drop count shows
    up in the trace flags as ``dropped_buckets:N``.

    Raises ConfigError when a required event never occurs in the log and
    UnusableLogError when fewer than 2 complete buckets remain.
    """
    alias_map = DEFAULT_EVENT_ALIASES if aliases is None else aliases
    by_event: dict[str, list[PerfRecord]] = {e: [] for e in REQUIRED_EVENTS}
    found_events = sorted({r.event for r in records})
    for r in records:
        canonical = r.event if r.event in by_event else alias_map.get(r.event)
        if canonical in by_event:
            by_event[canonical].append(r)
    missing = [e for e in REQUIRED_EVENTS if not by_event[e]]
    if missing:
        raise ConfigError(
            f"required events {missing} not found in log; events present: "
            f"{found_events or '(none)'}"
        )

    interval = _median_interval(by_event)
    tolerance = BUCKET_TOLERANCE * interval
    tagged = sorted(
        ((r.t, event, r) for event, recs in by_event.items() for r in recs),
        key=lambda item: item[0],
    )

    anchor = None
    current: dict[str, PerfRecord] = {}
    ambiguous = False
    n_buckets = 0
    dropped = 0
    samples: list[HpcSample] = []

    def _close():
        nonlocal n_buckets, dropped
        if anchor is None:
            return
        n_buckets += 1
        complete = set(current) == set(REQUIRED_EVENTS) and not ambiguous
        if complete and all(current[e].value is not None for e in REQUIRED_EVENTS):
            samples.append(
                HpcSample(
                    t=anchor,
                    instructions=float(current["instructions"].value),
                    llc_loads=float(current["LLC-loads"].value),
                    llc_load_misses=float(current["LLC-load-misses"].value),
                )
            )
        else:
            dropped += 1

    for t, event, rec in tagged:
        if anchor is None or t - anchor > tolerance:
            _close()
            anchor = t
            current = {}
            ambiguous = False
        if event in current:
            ambiguous = True
        current[event] = rec
    _close()

    if len(samples) < 2:
        raise UnusableLogError(
            f"only {len(samples)} complete time buckets out of {n_buckets} "
            f"(need at least 2); events present: {found_events}"
        )
    extra = (f"dropped_buckets:{dropped}",) if dropped else ()
    return Trace(
        samples=tuple(samples),
        label=label,
        scenario=scenario,
        source=Source.INGESTED,
        process_id=process_id,
        trace_id=trace_id,
        extra_flags=extra,
    )
