"""Versioned text formats for traces, window caches, and model files.

Every artifact is a UTF-8, LF-terminated text document with a common
envelope::

    # CSENT 1 <kind>
    # <key>: <value>          (optional creator metadata, ignored if unknown)
    <payload lines>
    # sha256: <hex digest of the payload block>

The digest covers the payload block only, so annotating metadata does not
invalidate a document. Floats are written with 17 significant digits, the
minimal length that round-trips 64-bit reals exactly; identical inputs
therefore produce byte-identical documents. Writers emit a temp file in the
target directory and rename it into place, so readers never observe a
partially written artifact. Documents carry no timestamps.
"""

import hashlib
import math
import os
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumError,
    ConfigError,
    DataError,
    FormatError,
    NumericError,
    ShapeError,
    UsageError,
    VersionError,
)
from .models import Model, ModelKind, ModelSpec, build
from .traces import (
    Attack,
    Dataset,
    HpcSample,
    Label,
    NormStats,
    Scenario,
    Source,
    Trace,
    Victim,
    Window,
)

MAGIC = "CSENT"
FORMAT_VERSION = 1

TRACE_FIELDS = (
    "t",
    "instructions",
    "llc_loads",
    "llc_load_misses",
    "label",
    "attack",
    "victim",
    "source",
    "trace_id",
)
TRACE_HEADER = ",".join(TRACE_FIELDS)


class ArtifactKind(Enum):
    """What a document stores; loaders reject mismatched kinds."""

    TRACE_CSV = "TraceCsv"
    MODEL_FILE = "ModelFile"
    BENCHMARK_CSV = "BenchmarkCsv"
    WINDOW_CACHE = "WindowCache"
    LOSS_CSV = "LossCsv"
    METRICS_CSV = "MetricsCsv"


@dataclass(frozen=True)
class Document:
    """A parsed envelope: verified header, metadata, and payload lines."""

    kind: ArtifactKind
    version: int
    metadata: dict[str, str]
    payload: tuple[str, ...]


def format_float(value: float) -> str:
    """Render a float with 17 significant digits (lossless round trip)."""
    return format(float(value), ".17g")


def _payload_digest(payload_lines) -> str:
    text = "".join(line + "\n" for line in payload_lines)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_document(path, kind: ArtifactKind, payload_lines, metadata=None) -> None:
    """Write an envelope document atomically (temp file + rename).

    ``metadata`` is an optional mapping of creator annotations (tool
    version, seed, ...); keys and values must be single-line and keys must
    not contain a colon. Payload lines must not start with '#', which is
    reserved for the envelope.
    """
    payload_lines = list(payload_lines)
    for line in payload_lines:
        if "\n" in line:
            raise UsageError("payload lines must not contain newlines")
        if line.startswith("#"):
            raise UsageError(f"payload line may not start with '#': {line!r}")
    lines = [f"# {MAGIC} {FORMAT_VERSION} {kind.value}"]
    for key, value in (metadata or {}).items():
        if not key or ":" in key or any("\n" in s for s in (key, str(value))):
            raise UsageError(f"invalid metadata entry {key!r}")
        lines.append(f"# {key}: {value}")
    lines.extend(payload_lines)
    lines.append(f"# sha256: {_payload_digest(payload_lines)}")
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def read_document(path, expected_kind: ArtifactKind) -> Document:
    """Read and verify an envelope document.

    Raises VersionError for an unsupported format version, ChecksumError
    when the payload digest does not match, and FormatError for any other
    structural defect (including a kind that differs from
    ``expected_kind``). The checksum is verified before the payload is
    interpreted, so a corrupt document never yields a partial artifact.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from None
    except UnicodeDecodeError:
        raise FormatError(f"{path} is not a UTF-8 text document") from None
    lines = text.splitlines()
    if len(lines) < 2:
        raise FormatError(f"{path} is too short to be a {MAGIC} document")

    parts = lines[0].split()
    if len(parts) != 4 or parts[0] != "#" or parts[1] != MAGIC:
        raise FormatError(f"{path} has no {MAGIC} header: {lines[0]!r}")
    try:
        version = int(parts[2])
    except ValueError:
        raise FormatError(f"{path}: malformed format version {parts[2]!r}") from None
    if version != FORMAT_VERSION:
        raise VersionError(
            f"{path} uses format version {version}; this reader supports "
            f"{FORMAT_VERSION}"
        )
    try:
        kind = ArtifactKind(parts[3])
    except ValueError:
        raise FormatError(f"{path}: unknown artifact kind {parts[3]!r}") from None
    if kind is not expected_kind:
        raise FormatError(
            f"{path} is a {kind.value} document, expected {expected_kind.value}"
        )

    checksum_line = lines[-1]
    if not checksum_line.startswith("# sha256: "):
        raise FormatError(f"{path} has no checksum line")
    stated = checksum_line[len("# sha256: "):].strip()

    body = lines[1:-1]
    metadata: dict[str, str] = {}
    start = 0
    while start < len(body) and body[start].startswith("#"):
        key, sep, value = body[start][1:].strip().partition(": ")
        if sep:
            metadata[key] = value
        start += 1
    payload = tuple(body[start:])

    if _payload_digest(payload) != stated:
        raise ChecksumError(f"{path}: payload does not match its sha256 checksum")
    return Document(kind=kind, version=version, metadata=metadata, payload=payload)


def _parse_int(value: str, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise FormatError(f"{what}: expected an integer, got {value!r}") from None


# ---------------------------------------------------------------------------
# Model files


_SPEC_FIELDS = (
    "kind",
    "window_len",
    "in_channels",
    "hidden",
    "conv_channels",
    "kernel",
    "pool",
    "seed",
)


def _tensor_lines(name: str, value: np.ndarray) -> list[str]:
    shape = value.shape
    lines = ["tensor " + name + " " + " ".join(str(d) for d in shape)]
    rows = value.reshape(1, -1) if value.ndim == 1 else value.reshape(shape[0], -1)
    for row in rows:
        lines.append(" ".join(format_float(v) for v in row))
    return lines


def _read_tensor(payload, i):
    parts = payload[i].split()
    if len(parts) < 3 or parts[0] != "tensor":
        raise FormatError(
            f"expected a tensor header at payload line {i + 1}, got {payload[i]!r}"
        )
    name = parts[1]
    try:
        shape = tuple(int(p) for p in parts[2:])
    except ValueError:
        raise FormatError(f"tensor {name}: malformed shape in {payload[i]!r}") from None
    if any(d < 1 for d in shape):
        raise ShapeError(f"tensor {name} declares a non-positive dimension: {shape}")
    n_rows = 1 if len(shape) == 1 else shape[0]
    width = shape[0] if len(shape) == 1 else math.prod(shape[1:])
    i += 1
    rows = []
    for r in range(n_rows):
        if i >= len(payload):
            raise FormatError(f"tensor {name}: document ends mid-tensor")
        tokens = payload[i].split()
        if len(tokens) != width:
            raise ShapeError(
                f"tensor {name}: row {r} has {len(tokens)} values but shape "
                f"{shape} needs {width} per row"
            )
        try:
            rows.append([float(t) for t in tokens])
        except ValueError:
            raise FormatError(f"tensor {name}: non-numeric value in row {r}") from None
        i += 1
    return name, np.array(rows, dtype=np.float64).reshape(shape), i


def save_model(path, model: Model, metadata=None) -> None:
    """Persist a model's architecture description and parameter tensors."""
    spec = model.spec
    lines = [
        f"kind {spec.kind.value}",
        f"window_len {spec.window_len}",
        f"in_channels {spec.in_channels}",
        f"hidden {spec.hidden}",
        f"conv_channels {spec.conv_channels}",
        f"kernel {spec.kernel}",
        f"pool {spec.pool}",
        f"seed {spec.seed}",
    ]
    params = model.params()
    lines.append(f"tensors {len(params)}")
    for name, value in params.items():
        if not np.all(np.isfinite(value)):
            raise NumericError(f"parameter {name} is non-finite; refusing to save")
        lines.extend(_tensor_lines(name, value))
    write_document(path, ArtifactKind.MODEL_FILE, lines, metadata)


def load_model(path) -> Model:
    """Rebuild a model from a document; parameters round-trip bit-exactly."""
    doc = read_document(path, ArtifactKind.MODEL_FILE)
    payload = doc.payload
    fields: dict[str, str] = {}
    count = None
    i = 0
    while i < len(payload):
        key, _, value = payload[i].partition(" ")
        i += 1
        if key == "tensors":
            count = _parse_int(value, "tensor count")
            break
        if key not in _SPEC_FIELDS:
            raise FormatError(f"unknown model field {key!r}")
        fields[key] = value
    if count is None:
        raise FormatError("model document has no tensor count line")
    missing = [k for k in _SPEC_FIELDS if k not in fields]
    if missing:
        raise FormatError(f"model document is missing fields: {missing}")
    try:
        spec = ModelSpec(
            kind=ModelKind.parse(fields["kind"]),
            window_len=_parse_int(fields["window_len"], "window_len"),
            in_channels=_parse_int(fields["in_channels"], "in_channels"),
            hidden=_parse_int(fields["hidden"], "hidden"),
            conv_channels=_parse_int(fields["conv_channels"], "conv_channels"),
            kernel=_parse_int(fields["kernel"], "kernel"),
            pool=_parse_int(fields["pool"], "pool"),
            seed=_parse_int(fields["seed"], "seed"),
        )
    except ConfigError as err:
        raise FormatError(f"invalid model description: {err}") from None

    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        if i >= len(payload):
            raise FormatError(
                f"model document declares {count} tensors but ends after "
                f"{len(tensors)}"
            )
        name, value, i = _read_tensor(payload, i)
        if name in tensors:
            raise FormatError(f"duplicate tensor {name}")
        tensors[name] = value
    if i != len(payload):
        raise FormatError(f"unexpected content after {count} tensors")

    model = build(spec)
    model.set_params(tensors)
    return model


# ---------------------------------------------------------------------------
# Trace tables


def save_traces(path, traces, metadata=None) -> None:
    """Write traces as one flat CSV table, one row per sampling interval.

    Rows of a trace are contiguous; a trace saved without a trace_id gets
    an empty id field and is re-split on load at timestamp resets.
    """
    traces = list(traces)
    if not traces:
        raise DataError("no traces to save")
    lines = [TRACE_HEADER]
    for trace in traces:
        tid = "" if trace.trace_id is None else str(trace.trace_id)
        tail = (
            f"{trace.label.value},{trace.scenario.attack.value},"
            f"{trace.scenario.victim.value},{trace.source.value},{tid}"
        )
        for s in trace.samples:
            lines.append(
                f"{format_float(s.t)},{format_float(s.instructions)},"
                f"{format_float(s.llc_loads)},{format_float(s.llc_load_misses)},"
                + tail
            )
    write_document(path, ArtifactKind.TRACE_CSV, lines, metadata)


def load_traces(path) -> list[Trace]:
    """Read a trace table; all trace invariants are re-validated."""
    doc = read_document(path, ArtifactKind.TRACE_CSV)
    payload = doc.payload
    if not payload or payload[0] != TRACE_HEADER:
        raise FormatError(f"trace table must start with header {TRACE_HEADER!r}")

    groups: list[tuple[tuple, list[HpcSample]]] = []
    prev_key = None
    prev_t = None
    for row_no, line in enumerate(payload[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(TRACE_FIELDS):
            raise FormatError(
                f"trace row {row_no}: expected {len(TRACE_FIELDS)} fields, "
                f"got {len(parts)}"
            )
        try:
            t, instructions, loads, misses = (float(p) for p in parts[:4])
        except ValueError:
            raise FormatError(f"trace row {row_no}: non-numeric counter") from None
        try:
            key = (
                Label(parts[4]),
                Attack(parts[5]),
                Victim(parts[6]),
                Source(parts[7]),
                int(parts[8]) if parts[8] else None,
            )
        except ValueError as err:
            raise FormatError(f"trace row {row_no}: {err}") from None
        # A new trace starts when any identity field changes or time resets.
        if key != prev_key or (prev_t is not None and t <= prev_t):
            groups.append((key, []))
            prev_key = key
        groups[-1][1].append(HpcSample(t, instructions, loads, misses))
        prev_t = t

    traces = []
    for (label, attack, victim, source, trace_id), samples in groups:
        traces.append(
            Trace(
                samples=tuple(samples),
                label=label,
                scenario=Scenario(attack, victim),
                source=source,
                trace_id=trace_id,
            )
        )
    return traces


# ---------------------------------------------------------------------------
# Window caches


def save_window_cache(path, dataset: Dataset, metadata=None) -> None:
    """Store a split, normalized dataset so runs resume without regeneration."""
    stats = dataset.norm_stats
    lines = [
        f"scenario {dataset.scenario.key}",
        f"seed {dataset.seed}",
        f"window_len {dataset.window_len}",
        "mean " + " ".join(format_float(v) for v in stats.mean),
        "std " + " ".join(format_float(v) for v in stats.std),
    ]
    for part, windows in (("train", dataset.train), ("test", dataset.test)):
        lines.append(f"{part} {len(windows)}")
        for w in windows:
            lines.append(
                w.label.value + " " + " ".join(format_float(v) for v in w.values.ravel())
            )
    write_document(path, ArtifactKind.WINDOW_CACHE, lines, metadata)


def load_window_cache(path) -> Dataset:
    """Read a window cache; class balance and shapes are re-verified."""
    doc = read_document(path, ArtifactKind.WINDOW_CACHE)
    payload = doc.payload
    fields: dict[str, str] = {}
    i = 0
    while i < len(payload):
        key, _, value = payload[i].partition(" ")
        if key in ("train", "test"):
            break
        fields[key] = value
        i += 1
    if "mean" not in fields or "std" not in fields:
        raise FormatError(
            "window cache has no normalization stats; refusing to load windows "
            "whose scaling provenance is lost"
        )
    for name in ("scenario", "seed", "window_len"):
        if name not in fields:
            raise FormatError(f"window cache is missing the {name} field")
    try:
        scenario = Scenario.parse(fields["scenario"])
    except ConfigError as err:
        raise FormatError(str(err)) from None
    seed = _parse_int(fields["seed"], "seed")
    window_len = _parse_int(fields["window_len"], "window_len")

    def stats_triple(key: str) -> tuple[float, float, float]:
        tokens = fields[key].split()
        if len(tokens) != 3:
            raise FormatError(f"{key} must list one value per channel (3)")
        try:
            a, b, c = (float(t) for t in tokens)
        except ValueError:
            raise FormatError(f"{key}: non-numeric value") from None
        return (a, b, c)

    stats = NormStats(mean=stats_triple("mean"), std=stats_triple("std"))

    splits: dict[str, tuple[Window, ...]] = {}
    for part in ("train", "test"):
        if i >= len(payload):
            raise FormatError(f"window cache is missing the {part} section")
        key, _, value = payload[i].partition(" ")
        if key != part:
            raise FormatError(f"expected the {part} section, found {payload[i]!r}")
        count = _parse_int(value, f"{part} window count")
        i += 1
        windows = []
        for r in range(count):
            if i >= len(payload):
                raise FormatError(
                    f"window cache declares {count} {part} windows but ends "
                    f"after {r}"
                )
            tokens = payload[i].split()
            try:
                label = Label(tokens[0])
            except ValueError:
                raise FormatError(
                    f"{part} window {r}: unknown label {tokens[0]!r}"
                ) from None
            values = tokens[1:]
            if len(values) != window_len * 3:
                raise ShapeError(
                    f"{part} window {r} has {len(values)} values, expected "
                    f"{window_len * 3}"
                )
            try:
                array = np.array(values, dtype=np.float64)
            except ValueError:
                raise FormatError(f"{part} window {r}: non-numeric value") from None
            windows.append(Window(array.reshape(window_len, 3), label))
            i += 1
        splits[part] = tuple(windows)
    if i != len(payload):
        raise FormatError("unexpected content after the test windows")

    return Dataset(
        train=splits["train"],
        test=splits["test"],
        norm_stats=stats,
        window_len=window_len,
        scenario=scenario,
        seed=seed,
    )
