"""Cache side-channel attack detection from hardware performance counters.

Synthetic and perf-ingested counter traces, six from-scratch neural
detectors, and a reproducible scenario-by-model benchmark, wrapped in
scikit-learn-style estimators and a command-line front end.
"""

from .benchmark import (
    BenchmarkConfig,
    BenchmarkMatrix,
    CellResult,
    run_benchmark,
    run_cell,
)
from .errors import (
    BalanceError,
    ChecksumError,
    ConfigError,
    CsentryError,
    DataError,
    DivergenceError,
    FormatError,
    NumericError,
    ParseError,
    ShapeError,
    StratificationError,
    UnusableLogError,
    UsageError,
    VersionError,
)
from .estimators import CscaDetector, WindowNormalizer
from .metrics import ConfusionMatrix, MetricsReport, confusion_from_predictions
from .models import ALL_KINDS, Model, ModelKind, ModelSpec, build
from .perf_ingest import assemble_trace, parse_perf_csv
from .persistence import (
    ArtifactKind,
    load_model,
    load_traces,
    load_window_cache,
    save_model,
    save_traces,
    save_window_cache,
)
from .synth import GeneratorConfig, default_config, gen_attack, gen_benign, gen_scenario_corpus
from .traces import (
    ALL_SCENARIOS,
    Attack,
    Dataset,
    HpcSample,
    Label,
    Scenario,
    Source,
    Trace,
    Victim,
    Window,
    make_windows,
    split_dataset,
)
from .training import TrainConfig, TrainResult, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "ALL_KINDS",
    "ALL_SCENARIOS",
    "ArtifactKind",
    "Attack",
    "BalanceError",
    "BenchmarkConfig",
    "BenchmarkMatrix",
    "CellResult",
    "ChecksumError",
    "ConfigError",
    "ConfusionMatrix",
    "CscaDetector",
    "CsentryError",
    "DataError",
    "Dataset",
    "DivergenceError",
    "FormatError",
    "GeneratorConfig",
    "HpcSample",
    "Label",
    "MetricsReport",
    "Model",
    "ModelKind",
    "ModelSpec",
    "NumericError",
    "ParseError",
    "Scenario",
    "ShapeError",
    "Source",
    "StratificationError",
    "Trace",
    "TrainConfig",
    "TrainResult",
    "UnusableLogError",
    "UsageError",
    "VersionError",
    "Victim",
    "Window",
    "WindowNormalizer",
    "assemble_trace",
    "build",
    "confusion_from_predictions",
    "default_config",
    "evaluate",
    "gen_attack",
    "gen_benign",
    "gen_scenario_corpus",
    "load_model",
    "load_traces",
    "load_window_cache",
    "make_windows",
    "parse_perf_csv",
    "run_benchmark",
    "run_cell",
    "save_model",
    "save_traces",
    "save_window_cache",
    "split_dataset",
    "train",
]
