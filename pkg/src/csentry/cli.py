"""Command-line front end: synth, ingest, train, eval, bench, plot.

Every subcommand takes the global flags --seed/--out/--workers/--verbose,
writes its artifacts plus a run_manifest.json into the output directory,
and exits 0 only when all requested work completed. Exit codes: 2 for
usage or configuration problems, 3 for data and file-format problems, 4
for runtime failures such as training divergence, 5 for a benchmark that
finished with failed cells. Timestamps appear only in the manifest, so
artifact files from equal seeds are byte-identical across reruns.
Human-readable summaries go to standard output, progress chatter to
standard error, machine-readable data to files; the streams never mix.
"""

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .benchmark import (
    DEFAULT_STRIDE,
    BenchmarkConfig,
    run_benchmark,
    save_benchmark_csv,
    save_heatmap_csv,
    save_table,
)
from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    NumericError,
    ShapeError,
    UsageError,
)
from .metrics import METRIC_NAMES
from .models import ModelKind, ModelSpec, build
from .perf_ingest import assemble_trace, parse_perf_csv
from .persistence import (
    MAGIC,
    ArtifactKind,
    atomic_write_text,
    format_float,
    load_model,
    load_traces,
    load_window_cache,
    save_model,
    save_traces,
    save_window_cache,
    write_document,
)
from .synth import (
    DEFAULT_N_SAMPLES,
    DEFAULT_TRACES_PER_LABEL,
    default_config,
    gen_scenario_corpus,
)
from .traces import ALL_SCENARIOS, Label, Scenario, split_dataset
from .training import TrainConfig, evaluate, train

# Accepted shorthand for the unwieldy hybrid name.
_KIND_ALIASES = {"hybrid": ModelKind.HYBRID_CNN_LSTM,
                 "cnn-lstm": ModelKind.HYBRID_CNN_LSTM,
                 "cnn_lstm": ModelKind.HYBRID_CNN_LSTM}

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4
EXIT_PARTIAL = 5


def parse_kind(token: str) -> ModelKind:
    alias = _KIND_ALIASES.get(token.strip().lower())
    return alias if alias is not None else ModelKind.parse(token)


def parse_kind_list(text: str) -> tuple[ModelKind, ...]:
    kinds = tuple(parse_kind(tok) for tok in text.split(",") if tok.strip())
    if not kinds:
        raise ConfigError("no model kinds given")
    return kinds


def parse_scenario_list(text: str) -> tuple[Scenario, ...]:
    scenarios = tuple(Scenario.parse(tok) for tok in text.split(",") if tok.strip())
    if not scenarios:
        raise ConfigError("no scenarios given")
    return scenarios


def _artifact_metadata(args) -> dict[str, str]:
    return {"tool": f"csentry {__version__}", "seed": str(args.seed)}


def _write_manifest(args, outputs, report) -> None:
    manifest = {
        "tool": f"csentry {__version__}",
        "command": args.command,
        "seed": args.seed,
        "timestamp_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "parameters": {
            k: v for k, v in sorted(vars(args).items()) if k != "func"
        },
        "outputs": sorted(outputs),
        "report": report,
    }
    atomic_write_text(
        Path(args.out) / "run_manifest.json",
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )


def _say(args, message: str) -> None:
    if args.verbose:
        print(message, file=sys.stderr)


def _sniff_kind(path) -> ArtifactKind:
    """Read just the header line to learn what a document stores."""
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from None
    except UnicodeDecodeError:
        raise DataError(f"{path} is not a UTF-8 text document") from None
    parts = first.split()
    if len(parts) == 4 and parts[0] == "#" and parts[1] == MAGIC:
        try:
            return ArtifactKind(parts[3])
        except ValueError:
            pass
    raise DataError(f"{path} is not a recognized {MAGIC} artifact")


def _dataset_from_args(args):
    """Load --data (trace table or window cache) or synthesize a corpus."""
    if args.data is not None:
        kind = _sniff_kind(args.data)
        if kind is ArtifactKind.WINDOW_CACHE:
            _say(args, f"loading window cache {args.data}")
            return load_window_cache(args.data)
        if kind is ArtifactKind.TRACE_CSV:
            _say(args, f"loading traces {args.data}")
            traces = load_traces(args.data)
            return split_dataset(
                traces, args.test_fraction, args.window_len, args.stride, args.seed
            )
        raise DataError(
            f"{args.data} is a {kind.value} document; expected TraceCsv or "
            f"WindowCache"
        )
    if args.scenario is None:
        raise ConfigError("either --data or --scenario is required")
    scenario = Scenario.parse(args.scenario)
    per_label = _traces_per_label(args.traces)
    _say(args, f"generating {scenario.key} corpus, seed {args.seed}")
    cfg = default_config(scenario, seed=args.seed, n_samples=args.samples)
    corpus = gen_scenario_corpus(cfg, per_label, per_label)
    return split_dataset(
        corpus, args.test_fraction, args.window_len, args.stride, args.seed
    )


def _traces_per_label(total: int) -> int:
    if total < 2 or total % 2:
        raise ConfigError(f"--traces must be a positive even total, got {total}")
    return total // 2


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> int:
    scenario = Scenario.parse(args.scenario)
    per_label = _traces_per_label(args.traces)
    overrides = {"n_samples": args.samples}
    for flag, field in (
        ("noise_cv", "noise_cv"),
        ("amplitude", "attack_miss_amplitude"),
        ("spike_prob", "attack_spike_prob"),
        ("burst_period", "attack_burst_period"),
        ("burst_width", "attack_burst_width"),
        ("distractor_rate", "distractor_rate"),
        ("flurry_rate", "flurry_rate"),
    ):
        value = getattr(args, flag)
        if value is not None:
            overrides[field] = value
    cfg = default_config(scenario, seed=args.seed, **overrides)
    corpus = gen_scenario_corpus(cfg, per_label, per_label)

    out = Path(args.out)
    outputs = []
    metadata = _artifact_metadata(args)
    for idx, trace in enumerate(corpus):
        name = f"trace_{idx:03d}_{trace.label.value}.csv"
        save_traces(out / name, [trace], metadata)
        outputs.append(name)
        _say(args, f"wrote {name}")
    samples = {label: sum(len(t) for t in corpus if t.label is label)
               for label in Label}
    print(
        f"wrote {len(corpus)} traces for {scenario.key}: "
        f"{per_label} benign ({samples[Label.BENIGN]} samples), "
        f"{per_label} malicious ({samples[Label.MALICIOUS]} samples)"
    )
    _write_manifest(args, outputs, {
        "scenario": scenario.key,
        "traces": len(corpus),
        "samples_per_trace": args.samples,
    })
    return EXIT_OK


def cmd_ingest(args) -> int:
    log_path = Path(args.log)
    try:
        text = log_path.read_text(encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read {log_path}: {err}") from None
    outcome = parse_perf_csv(text, delimiter=args.delimiter, lenient=args.lenient)
    trace = assemble_trace(
        outcome,
        label=Label(args.label),
        scenario=Scenario.parse(args.scenario),
        trace_id=0,
    )
    dropped = 0
    for flag in trace.flags:
        if flag.startswith("dropped_buckets:"):
            dropped = int(flag.split(":", 1)[1])

    out = Path(args.out)
    name = f"{log_path.stem}.trace.csv"
    save_traces(out / name, [trace], _artifact_metadata(args))
    print(
        f"assembled {len(trace)} samples from {log_path.name}; "
        f"{dropped} intervals dropped; {len(outcome.skipped)} lines skipped"
    )
    _write_manifest(args, [name], {
        "samples": len(trace),
        "intervals_dropped": dropped,
        "lines_skipped": len(outcome.skipped),
        "flags": list(trace.flags),
    })
    return EXIT_OK


def cmd_train(args) -> int:
    kind = parse_kind(args.kind)
    dataset = _dataset_from_args(args)
    spec = ModelSpec(
        kind=kind,
        window_len=dataset.window_len,
        hidden=args.hidden,
        seed=args.seed,
    )
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        shuffle_seed=args.seed,
        early_stop_patience=args.patience,
        val_fraction=args.val_fraction,
    )
    _say(args, f"training {kind.value} on {len(dataset.train)} windows")
    model = build(spec)
    model, result = train(model, dataset, cfg)

    out = Path(args.out)
    metadata = _artifact_metadata(args)
    save_model(out / "model.txt", model, metadata)
    save_window_cache(out / "windows.cache", dataset, metadata)
    loss_lines = ["epoch,train_loss,val_loss"]
    for epoch, (tl, vl) in enumerate(zip(result.train_loss, result.val_loss)):
        loss_lines.append(f"{epoch},{format_float(tl)},{format_float(vl)}")
    write_document(out / "loss_history.csv", ArtifactKind.LOSS_CSV,
                   loss_lines, metadata)

    stopped = "stopped early" if result.stopped_early else "ran to the last epoch"
    print(
        f"trained {kind.value} for {result.epochs_run} epochs ({stopped}); "
        f"best validation loss {result.val_loss[result.best_epoch]:.6f} at "
        f"epoch {result.best_epoch}"
    )
    print("wrote model.txt, windows.cache, loss_history.csv")
    _write_manifest(
        args,
        ["model.txt", "windows.cache", "loss_history.csv"],
        {
            "kind": kind.value,
            "epochs_run": result.epochs_run,
            "best_epoch": result.best_epoch,
            "stopped_early": result.stopped_early,
            "train_windows": len(dataset.train),
            "test_windows": len(dataset.test),
        },
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    dataset = _dataset_from_args(args)
    report = evaluate(model, dataset.test, args.threshold)

    for name in METRIC_NAMES:
        print(f"{name:<10} {getattr(report, name):>8.2f}")
    if report.flags:
        print("flags: " + ", ".join(report.flags))

    metadata = _artifact_metadata(args)
    if report.flags:
        metadata["flags"] = ",".join(report.flags)
    lines = [
        ",".join(METRIC_NAMES),
        ",".join(format_float(getattr(report, name)) for name in METRIC_NAMES),
    ]
    write_document(Path(args.out) / "metrics.csv", ArtifactKind.METRICS_CSV,
                   lines, metadata)
    _write_manifest(args, ["metrics.csv"], {
        "model": str(args.model),
        "threshold": args.threshold,
        "confusion": {
            "tp": report.confusion.tp,
            "fp": report.confusion.fp,
            "tn": report.confusion.tn,
            "fn": report.confusion.fn,
        },
        "windows_evaluated": report.confusion.total,
    })
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = BenchmarkConfig(
        scenarios=parse_scenario_list(args.scenarios),
        kinds=parse_kind_list(args.models),
        seeds=tuple(range(args.seed, args.seed + args.n_seeds)),
        window_len=args.window_len,
        stride=args.stride,
        test_fraction=args.test_fraction,
        traces_per_label=_traces_per_label(args.traces),
        n_samples=args.samples,
        hidden=args.hidden,
        threshold=args.threshold,
        train=TrainConfig(
            epochs=args.epochs,
            batch_size=args.batch_size,
            lr=args.lr,
            early_stop_patience=args.patience,
            val_fraction=args.val_fraction,
        ),
    )

    def progress(done, total, result):
        status = "failed" if result.failed else "ok"
        _say(args, f"[{done}/{total}] {result.scenario.key} "
                   f"{result.kind.value} seed {result.seed}: {status} "
                   f"({result.train_seconds:.1f}s)")

    matrix = run_benchmark(cfg, workers=args.workers, progress=progress)

    out = Path(args.out)
    metadata = _artifact_metadata(args)
    save_benchmark_csv(out / "benchmark.csv", matrix, metadata)
    save_heatmap_csv(out / "heatmap.csv", matrix, metadata)
    save_table(out / "benchmark.txt", matrix)

    for scenario in cfg.scenarios:
        ranked = [
            (matrix.mean_accuracy(scenario, kind), kind) for kind in cfg.kinds
        ]
        ranked = [(acc, kind) for acc, kind in ranked if acc is not None]
        if ranked:
            best_acc, best_kind = max(ranked, key=lambda pair: pair[0])
            print(f"{scenario.key}: best {best_kind.value} "
                  f"({best_acc:.2f}% mean accuracy)")
        else:
            print(f"{scenario.key}: all cells failed")
    failures = matrix.failures()
    if failures:
        print(f"{len(failures)} of {len(matrix.results)} cells failed")

    _write_manifest(
        args,
        ["benchmark.csv", "benchmark.txt", "heatmap.csv"],
        {
            "cells": len(matrix.results),
            "failed_cells": len(failures),
            "seeds": list(cfg.seeds),
            "scenarios": [s.key for s in cfg.scenarios],
            "models": [k.value for k in cfg.kinds],
        },
    )
    return EXIT_OK if matrix.complete() else EXIT_PARTIAL


def cmd_plot(args) -> int:
    traces = load_traces(args.data)
    trace = None
    if args.trace_id is None:
        trace = traces[0]
    else:
        for candidate in traces:
            if candidate.trace_id == args.trace_id:
                trace = candidate
                break
        if trace is None:
            raise DataError(
                f"{args.data} has no trace with id {args.trace_id} "
                f"(ids: {[t.trace_id for t in traces]})"
            )

    times = trace.times()
    misses = trace.counters()[:, 2]
    if args.overlay is not None:
        overlay_traces = load_traces(args.overlay)
        overlay = overlay_traces[0].counters()[:, 2]
        n = min(len(times), len(overlay))
        lines = ["t,llc_load_misses,overlay_llc_load_misses"]
        for i in range(n):
            lines.append(
                f"{format_float(times[i])},{format_float(misses[i])},"
                f"{format_float(overlay[i])}"
            )
    else:
        lines = ["t,llc_load_misses"]
        for t, m in zip(times, misses):
            lines.append(f"{format_float(t)},{format_float(m)}")

    out = Path(args.out)
    atomic_write_text(out / "plot.csv", "\n".join(lines) + "\n")
    print(f"wrote plot.csv ({len(lines) - 1} rows)")
    _write_manifest(args, ["plot.csv"], {
        "trace_id": trace.trace_id,
        "label": trace.label.value,
        "rows": len(lines) - 1,
    })
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="master seed for every derived random stream")
    common.add_argument("--out", default=".",
                        help="output directory (created if missing)")
    common.add_argument("--workers", type=int, default=1,
                        help="parallel benchmark cells (bench only)")
    common.add_argument("--verbose", action="store_true",
                        help="progress messages on stderr")

    synth_flags = argparse.ArgumentParser(add_help=False)
    synth_flags.add_argument("--traces", type=int,
                             default=2 * DEFAULT_TRACES_PER_LABEL,
                             help="total traces, split evenly across labels")
    synth_flags.add_argument("--samples", type=int, default=DEFAULT_N_SAMPLES,
                             help="sampling intervals per trace")

    split_flags = argparse.ArgumentParser(add_help=False)
    split_flags.add_argument("--window-len", type=int, default=32)
    split_flags.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    split_flags.add_argument("--test-fraction", type=float, default=0.2)

    train_flags = argparse.ArgumentParser(add_help=False)
    train_flags.add_argument("--epochs", type=int,
                             default=TrainConfig().epochs)
    train_flags.add_argument("--batch-size", type=int, default=32)
    train_flags.add_argument("--lr", type=float, default=1e-3)
    train_flags.add_argument("--val-fraction", type=float, default=0.1)
    train_flags.add_argument("--patience", type=int,
                             default=TrainConfig().early_stop_patience,
                             help="early-stopping patience in epochs")
    train_flags.add_argument("--hidden", type=int, default=32,
                             help="hidden units of recurrent layers")

    parser = argparse.ArgumentParser(
        prog="csentry",
        description="Detect cache side-channel attacks in performance-counter "
                    "traces.",
    )
    parser.add_argument("--version", action="version",
                        version=f"csentry {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common, synth_flags],
                       help="generate a labeled synthetic corpus")
    p.add_argument("--scenario", required=True,
                   help="attack:victim selector, e.g. flush_reload:aes")
    p.add_argument("--noise-cv", type=float, default=None)
    p.add_argument("--amplitude", type=float, default=None,
                   help="attack miss inflation factor")
    p.add_argument("--spike-prob", type=float, default=None)
    p.add_argument("--burst-period", type=int, default=None)
    p.add_argument("--burst-width", type=int, default=None)
    p.add_argument("--distractor-rate", type=float, default=None,
                   help="activity-burst start probability per interval")
    p.add_argument("--flurry-rate", type=float, default=None,
                   help="miss-flurry start probability per interval")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common],
                       help="convert a perf stat CSV log into a trace file")
    p.add_argument("--log", required=True, help="perf -x, interval-mode CSV")
    p.add_argument("--label", required=True, choices=[l.value for l in Label])
    p.add_argument("--scenario", required=True)
    p.add_argument("--lenient", action="store_true",
                   help="skip malformed lines instead of failing")
    p.add_argument("--delimiter", default=",")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", parents=[common, synth_flags, split_flags,
                                         train_flags],
                       help="train one detector and save it")
    p.add_argument("--kind", default="hybrid",
                   help="mlp, cnn, rnn, lstm, gru, or hybrid")
    p.add_argument("--data", default=None,
                   help="trace table or window cache; omit to synthesize")
    p.add_argument("--scenario", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common, synth_flags, split_flags],
                       help="evaluate a saved model on held-out windows")
    p.add_argument("--model", required=True, help="model file from train")
    p.add_argument("--data", default=None,
                   help="trace table or window cache; omit to synthesize")
    p.add_argument("--scenario", default=None)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common, synth_flags, split_flags,
                                         train_flags],
                       help="run the scenario-by-model benchmark matrix")
    p.add_argument("--scenarios",
                   default=",".join(s.key for s in ALL_SCENARIOS),
                   help="comma-separated attack:victim selectors")
    p.add_argument("--models", default="mlp,cnn,rnn,lstm,gru,hybrid",
                   help="comma-separated model kinds")
    p.add_argument("--n-seeds", type=int, default=5,
                   help="seeds per cell, starting at --seed")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", parents=[common],
                       help="export one trace's miss series as plain CSV")
    p.add_argument("--data", required=True, help="trace table file")
    p.add_argument("--trace-id", type=int, default=None,
                   help="pick a trace by id (default: first)")
    p.add_argument("--overlay", default=None,
                   help="second trace table whose first trace is added as a "
                        "comparison column")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except (ConfigError, UsageError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, NumericError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except (DataError, ShapeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
