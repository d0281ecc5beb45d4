"""Scenario-by-model benchmark grid with per-seed deterministic cells.

One cell job generates a corpus for (scenario, seed), splits it, trains a
model of the requested kind, and evaluates on the held-out traces. Jobs
are independent and may run in a process pool; aggregation sorts results
into canonical order, so the emitted artifacts do not depend on worker
scheduling. Wall-clock training time is the only non-reproducible column.
"""

import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivergenceError
from .metrics import METRIC_NAMES, MetricsReport
from .models import ALL_KINDS, ModelKind, ModelSpec, build
from .persistence import (
    ArtifactKind,
    atomic_write_text,
    format_float,
    write_document,
)
from .synth import (
    DEFAULT_N_SAMPLES,
    DEFAULT_TRACES_PER_LABEL,
    default_config,
    gen_scenario_corpus,
)
from .traces import ALL_SCENARIOS, Scenario, split_dataset
from .training import TrainConfig, evaluate, train

BENCHMARK_FIELDS = (
    "scenario",
    "attack",
    "victim",
    "model",
    "seed",
    "accuracy",
    "precision",
    "recall",
    "fp_rate",
    "fn_rate",
    "train_seconds",
)
BENCHMARK_HEADER = ",".join(BENCHMARK_FIELDS)

# Rate conventions, stamped into artifact metadata so consumers need not
# guess which class the rates are normalized by.
CONVENTION_METADATA = {
    "positive_class": "malicious",
    "fp_rate": "100*fp/(fp+tn)",
    "fn_rate": "100*fn/(fn+tp)",
}

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DEFAULT_WINDOW_LEN = 32
DEFAULT_STRIDE = 8
DEFAULT_TEST_FRACTION = 0.2


@dataclass(frozen=True)
class BenchmarkConfig:
    """Everything a benchmark run depends on, seeds included."""

    scenarios: tuple[Scenario, ...] = ALL_SCENARIOS
    kinds: tuple[ModelKind, ...] = ALL_KINDS
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    window_len: int = DEFAULT_WINDOW_LEN
    stride: int = DEFAULT_STRIDE
    test_fraction: float = DEFAULT_TEST_FRACTION
    traces_per_label: int = DEFAULT_TRACES_PER_LABEL
    n_samples: int = DEFAULT_N_SAMPLES
    hidden: int = 32
    conv_channels: int = 16
    kernel: int = 3
    pool: int = 2
    threshold: float = 0.5
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        for name in ("scenarios", "kinds", "seeds"):
            values = getattr(self, name)
            if not values:
                raise ConfigError(f"benchmark needs at least one entry in {name}")
            if len(set(values)) != len(values):
                raise ConfigError(f"duplicate entries in {name}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.n_samples < self.window_len:
            raise ConfigError(
                f"n_samples {self.n_samples} is shorter than window_len "
                f"{self.window_len}"
            )

    def jobs(self) -> list[tuple[Scenario, ModelKind, int]]:
        return [
            (scenario, kind, seed)
            for scenario in self.scenarios
            for kind in self.kinds
            for seed in self.seeds
        ]


@dataclass(frozen=True)
class CellResult:
    """Outcome of one (scenario, kind, seed) run."""

    scenario: Scenario
    kind: ModelKind
    seed: int
    report: MetricsReport | None
    train_seconds: float
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.report is None


def run_cell(cfg: BenchmarkConfig, scenario: Scenario, kind: ModelKind,
             seed: int) -> CellResult:
    """Generate, split, train, and evaluate one cell; never raises on
    divergence, which is recorded as a failed result instead."""
    gen_cfg = default_config(scenario, seed=seed, n_samples=cfg.n_samples)
    traces = gen_scenario_corpus(gen_cfg, cfg.traces_per_label, cfg.traces_per_label)
    dataset = split_dataset(
        traces, cfg.test_fraction, cfg.window_len, cfg.stride, seed
    )
    spec = ModelSpec(
        kind=kind,
        window_len=cfg.window_len,
        hidden=cfg.hidden,
        conv_channels=cfg.conv_channels,
        kernel=cfg.kernel,
        pool=cfg.pool,
        seed=seed,
    )
    train_cfg = dataclasses.replace(cfg.train, shuffle_seed=seed)
    model = build(spec)
    start = time.perf_counter()
    try:
        model, _ = train(model, dataset, train_cfg)
    except DivergenceError as err:
        return CellResult(scenario, kind, seed, None,
                          time.perf_counter() - start, str(err))
    seconds = time.perf_counter() - start
    report = evaluate(model, dataset.test, cfg.threshold)
    return CellResult(scenario, kind, seed, report, seconds)


def _run_cell_job(args) -> CellResult:
    return run_cell(*args)


@dataclass(frozen=True)
class BenchmarkMatrix:
    """All cell results in canonical (scenario, kind, seed) order."""

    config: BenchmarkConfig
    results: tuple[CellResult, ...]

    def __post_init__(self):
        cfg = self.config
        ordered = sorted(
            self.results,
            key=lambda r: (
                cfg.scenarios.index(r.scenario),
                cfg.kinds.index(r.kind),
                cfg.seeds.index(r.seed),
            ),
        )
        object.__setattr__(self, "results", tuple(ordered))

    def cell(self, scenario: Scenario, kind: ModelKind) -> tuple[CellResult, ...]:
        return tuple(
            r for r in self.results if r.scenario == scenario and r.kind == kind
        )

    def cell_stats(self, scenario: Scenario, kind: ModelKind,
                   metric: str) -> tuple[float, float, int] | None:
        """(mean, std, n) of one metric over the cell's completed seeds."""
        values = [
            getattr(r.report, metric)
            for r in self.cell(scenario, kind)
            if not r.failed
        ]
        if not values:
            return None
        return float(np.mean(values)), float(np.std(values)), len(values)

    def mean_accuracy(self, scenario: Scenario, kind: ModelKind) -> float | None:
        stats = self.cell_stats(scenario, kind, "accuracy")
        return None if stats is None else stats[0]

    def failures(self) -> tuple[CellResult, ...]:
        return tuple(r for r in self.results if r.failed)

    def complete(self) -> bool:
        expected = len(self.config.scenarios) * len(self.config.kinds) * len(
            self.config.seeds
        )
        return len(self.results) == expected and not self.failures()


def run_benchmark(cfg: BenchmarkConfig, workers: int = 1,
                  progress=None) -> BenchmarkMatrix:
    """Run every (scenario, kind, seed) job, serially or in a process pool.

    ``progress``, when given, is called as progress(done, total, result)
    after each cell finishes.
    """
    if workers < 1:
        raise ConfigError(f"workers must be positive, got {workers}")
    jobs = cfg.jobs()
    args = [(cfg, scenario, kind, seed) for scenario, kind, seed in jobs]
    results = []
    if workers == 1:
        iterator = map(_run_cell_job, args)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        iterator = pool.map(_run_cell_job, args)
    try:
        for done, result in enumerate(iterator, start=1):
            results.append(result)
            if progress is not None:
                progress(done, len(jobs), result)
    finally:
        if workers > 1:
            pool.shutdown()
    return BenchmarkMatrix(config=cfg, results=tuple(results))


# ---------------------------------------------------------------------------
# Artifact rendering


def render_benchmark_rows(matrix: BenchmarkMatrix) -> list[str]:
    """Full-precision per-seed rows; failed cells leave metrics empty."""
    lines = [BENCHMARK_HEADER]
    for r in matrix.results:
        if r.failed:
            metrics = [""] * len(METRIC_NAMES)
        else:
            metrics = [format_float(getattr(r.report, m)) for m in METRIC_NAMES]
        lines.append(
            ",".join(
                [
                    r.scenario.key,
                    r.scenario.attack.value,
                    r.scenario.victim.value,
                    r.kind.value,
                    str(r.seed),
                ]
                + metrics
                + [format_float(r.train_seconds)]
            )
        )
    return lines


def save_benchmark_csv(path, matrix: BenchmarkMatrix, metadata=None) -> None:
    merged = dict(CONVENTION_METADATA)
    merged.update(metadata or {})
    write_document(
        path, ArtifactKind.BENCHMARK_CSV, render_benchmark_rows(matrix), merged
    )


def render_heatmap_rows(matrix: BenchmarkMatrix) -> list[str]:
    """Mean-accuracy grid: one row per scenario, one column per model."""
    cfg = matrix.config
    lines = ["scenario," + ",".join(kind.value for kind in cfg.kinds)]
    for scenario in cfg.scenarios:
        cells = []
        for kind in cfg.kinds:
            mean = matrix.mean_accuracy(scenario, kind)
            cells.append("" if mean is None else format_float(mean))
        lines.append(scenario.key + "," + ",".join(cells))
    return lines


def save_heatmap_csv(path, matrix: BenchmarkMatrix, metadata=None) -> None:
    merged = dict(CONVENTION_METADATA)
    merged.update(metadata or {})
    write_document(
        path, ArtifactKind.BENCHMARK_CSV, render_heatmap_rows(matrix), merged
    )


def render_table(matrix: BenchmarkMatrix) -> str:
    """Aligned text table: one block per scenario, one row per model.

    Cells show mean +/- std over completed seeds at two decimals; a '*'
    marks cells where some seeds failed, 'failed' cells where all did.
    """
    cfg = matrix.config
    name_width = max(len("model"), max(len(k.value) for k in cfg.kinds))
    col_width = max(len("99.99 +/- 99.99*"), max(len(m) for m in METRIC_NAMES)) + 2
    out = [
        "benchmark over seeds " + ", ".join(str(s) for s in cfg.seeds),
        "positive class = malicious; fp_rate = 100*fp/(fp+tn); "
        "fn_rate = 100*fn/(fn+tp)",
    ]
    any_partial = False
    for scenario in cfg.scenarios:
        out.append("")
        out.append(f"scenario {scenario.key}")
        header = "  " + "model".ljust(name_width)
        for metric in METRIC_NAMES:
            header += metric.rjust(col_width)
        out.append(header)
        for kind in cfg.kinds:
            row = "  " + kind.value.ljust(name_width)
            n_seeds = len(matrix.cell(scenario, kind))
            for metric in METRIC_NAMES:
                stats = matrix.cell_stats(scenario, kind, metric)
                if stats is None:
                    cell = "failed"
                else:
                    mean, std, n = stats
                    cell = f"{mean:.2f} +/- {std:.2f}"
                    if n < n_seeds:
                        cell += "*"
                        any_partial = True
                row += cell.rjust(col_width)
            out.append(row)
    if any_partial:
        out.append("")
        out.append("* some seeds diverged; statistics cover completed seeds only")
    failures = matrix.failures()
    if failures:
        out.append("")
        for r in failures:
            out.append(
                f"failed: {r.scenario.key} {r.kind.value} seed {r.seed}: {r.error}"
            )
    return "\n".join(out) + "\n"


def save_table(path, matrix: BenchmarkMatrix) -> None:
    atomic_write_text(Path(path), render_table(matrix))
