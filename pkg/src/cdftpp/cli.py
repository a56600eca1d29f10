"""Command-line harness: dataset generation, training grids, curve exports.

Subcommands: generate | train | evaluate | intensity-curve | density-curve |
ablation | compare. Plots are never rendered; every figure-shaped output is
a plot-ready CSV with a documented schema. Exit codes: 0 success, 2
validation error, 3 training abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import synthetic as sg
from .autodiff import EvaluationError
from .data_io import DataFormatError, make_splits, read_dataset, write_dataset
from .encoder import encode_sequence
from .modelbase import load_checkpoint, save_checkpoint
from .registry import MODEL_NAMES, get_model
from .synthetic import GenerationError
from .training import (
    RunConfig,
    TrainingAbort,
    evaluate_nll,
    run_repeats,
    train,
    write_metrics_csv,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_TRAINING = 3


def _load_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            values.update(json.load(fh))
    for key in ("seed", "repeats"):
        override = getattr(args, key, None)
        if override is not None:
            values[key] = override
    if getattr(args, "fusion", None):
        values["fusion"] = args.fusion
    return RunConfig(**values)


def _outdir(args) -> str:
    out = getattr(args, "out", None) or "."
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    sequences, metadata = sg.build_dataset(
        args.dataset, n_sequences=args.sequences, max_events=args.max_events,
        seed=args.seed if args.seed is not None else 0)
    path = args.out or f"{args.dataset}.jsonl"
    write_dataset(sequences, path, metadata)
    print(f"wrote {len(sequences)} sequences to {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train / evaluate
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    config = _load_config(args)
    sequences, metadata = read_dataset(args.data)
    out = _outdir(args)
    results, summary = run_repeats(args.model, sequences, config,
                                   workers=args.workers)
    summary["dataset"] = args.data
    summary["dataset_metadata"] = metadata
    for repeat, best, record, manifest in results:
        model = get_model(args.model, config.model_config())
        save_checkpoint(os.path.join(out, f"checkpoint_repeat{repeat}.json"),
                        model, best)
        write_metrics_csv(record, os.path.join(out, f"metrics_repeat{repeat}.csv"))
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    print(f"{args.model} on {args.data}: test NLL "
          f"{summary['test_nll_mean']:.4f} +/- {summary['test_nll_std']:.4f} "
          f"({config.repeats} repeats)")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model, params = load_checkpoint(args.checkpoint)
    sequences, _ = read_dataset(args.data)
    nll = evaluate_nll(model, params, sequences, args.max_seq_len)
    print(f"per-event NLL: {nll:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# curve exports
# ---------------------------------------------------------------------------

class TrueHawkesSurrogate:
    """The generating model plugged through the same exporter interface."""

    def __init__(self, params: sg.HawkesParams):
        self.params = params

    def intensity_at_times(self, grid, seq):
        times = seq.arrival_times
        return np.array([sg.hawkes_intensity(t, times, self.params)
                         for t in grid])


class ModelCurveAdapter:
    """Re-encodes the history at each grid time and asks the model head."""

    TAU_FLOOR = 1e-9

    def __init__(self, model, params):
        self.model = model
        self.params = params

    def intensity_at_times(self, grid, seq):
        times = seq.arrival_times
        enc_params = self.model.encoder_params(self.params)
        feature = self.model.config.feature
        states = encode_sequence(seq, enc_params, feature)
        out = np.empty(len(grid))
        for i, t in enumerate(grid):
            n_before = int(np.searchsorted(times, t, side="left"))
            h = states[min(n_before, len(states) - 1)]
            t_last = times[n_before - 1] if n_before > 0 else 0.0
            tau = max(t - t_last, self.TAU_FLOOR)
            out[i] = self.model.intensity_given_state(self.params, [tau], h)[0]
        return out


def _hawkes_params_from_metadata(metadata) -> sg.HawkesParams | None:
    params = metadata.get("params", {})
    if str(metadata.get("generator", "")).startswith("hawkes") and "mu" in params:
        return sg.HawkesParams(params["mu"], params["alphas"], params["betas"])
    return None


def cmd_intensity_curve(args) -> int:
    sequences, metadata = read_dataset(args.data)
    if not 0 <= args.sequence_index < len(sequences):
        raise ValueError(f"sequence index {args.sequence_index} out of range")
    seq = sequences[args.sequence_index]
    grid = np.arange(0.0, seq.window_end + 0.5 * args.grid_step, args.grid_step)
    grid = grid[grid <= seq.window_end]

    true_params = _hawkes_params_from_metadata(metadata)
    if args.checkpoint == "true":
        if true_params is None:
            raise ValueError("'true' surrogate needs a Hawkes dataset")
        adapter = TrueHawkesSurrogate(true_params)
    else:
        model, params = load_checkpoint(args.checkpoint)
        adapter = ModelCurveAdapter(model, params)
    lam_model = adapter.intensity_at_times(grid, seq)

    path = args.out or "intensity_curve.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if true_params is not None:
            surrogate = TrueHawkesSurrogate(true_params)
            lam_true = surrogate.intensity_at_times(grid, seq)
            writer.writerow(["t", "lambda_true", "lambda_model"])
            for t, lt, lm in zip(grid, lam_true, lam_model):
                writer.writerow([repr(float(t)), repr(float(lt)), repr(float(lm))])
        else:
            writer.writerow(["t", "lambda_model"])
            for t, lm in zip(grid, lam_model):
                writer.writerow([repr(float(t)), repr(float(lm))])
    print(f"wrote {len(grid)} grid points to {path}")
    return EXIT_OK


def cmd_density_curve(args) -> int:
    sequences, _ = read_dataset(args.data)
    if not 0 <= args.sequence_index < len(sequences):
        raise ValueError(f"sequence index {args.sequence_index} out of range")
    seq = sequences[args.sequence_index]
    model, params = load_checkpoint(args.checkpoint)
    states = encode_sequence(seq, model.encoder_params(params),
                             model.config.feature)
    event_index = args.event_index if args.event_index is not None else len(seq) - 1
    if not 0 <= event_index < len(states):
        raise ValueError(f"event index {event_index} out of range")
    h = states[event_index]
    taus = np.linspace(args.tau_max / args.points, args.tau_max, args.points)
    dens = np.exp(model.log_density_given_state(params, taus, h))
    path = args.out or "density_curve.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "density"])
        for t, d in zip(taus, dens):
            writer.writerow([repr(float(t)), repr(float(d))])
    print(f"wrote {args.points} density points to {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# ablation
# ---------------------------------------------------------------------------

def cmd_ablation(args) -> int:
    base = _load_config(args)
    sequences, _ = read_dataset(args.data)
    out = _outdir(args)
    manifest = make_splits(len(sequences), base.repeats, base.seed)[0]
    train_seqs = [sequences[i] for i in manifest.train]
    val_seqs = [sequences[i] for i in manifest.val]
    summary = {}
    for fusion in ("product", "add"):
        values = asdict(base)
        values["fusion"] = fusion
        config = RunConfig(**values)
        model = get_model("cufun", config.model_config())
        best, record = train(model, train_seqs, val_seqs, config)
        path = os.path.join(out, f"ablation_{fusion}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "mean_abs_u", "mean_abs_v"])
            for row in record.epochs:
                writer.writerow([row["epoch"], row["mean_abs_u"],
                                 row["mean_abs_v"]])
        quartile = record.epochs[3 * len(record.epochs) // 4:]
        summary[fusion] = {
            "epochs": len(record.epochs),
            "final_quartile_mean_abs_u": float(
                np.mean([r["mean_abs_u"] for r in quartile])),
            "final_quartile_mean_abs_v": float(
                np.mean([r["mean_abs_v"] for r in quartile])),
            "best_val_nll": record.best_val_nll,
        }
        print(f"fusion={fusion}: {len(record.epochs)} epochs, "
              f"final-quartile mean|u|="
              f"{summary[fusion]['final_quartile_mean_abs_u']:.4f}, "
              f"mean|v|={summary[fusion]['final_quartile_mean_abs_v']:.4f}")
    with open(os.path.join(out, "ablation_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def _true_model_row(metadata, dataset_path, config: RunConfig):
    name = metadata.get("generator")
    if name not in sg.DATASET_NAMES:
        return None
    sequences, _ = read_dataset(dataset_path)
    manifests = make_splits(len(sequences), config.repeats, config.seed)
    values = []
    for m in manifests:
        test = [sequences[i].truncated(config.max_seq_len) for i in m.test]
        values.append(sg.true_per_event_nll(name, test))
    values = np.asarray(values)
    std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return float(values.mean()), std


def cmd_compare(args) -> int:
    run_dirs = list(args.runs)
    if args.plan:
        with open(args.plan) as fh:
            run_dirs += json.load(fh).get("runs", [])
    rows = []
    missing = []
    true_rows = {}
    for run in run_dirs:
        summary_path = os.path.join(run, "summary.json")
        if not os.path.exists(summary_path):
            missing.append(run)
            continue
        with open(summary_path) as fh:
            summary = json.load(fh)
        dataset = summary.get("dataset", "?")
        label = summary.get("dataset_metadata", {}).get("generator",
                                                        os.path.basename(dataset))
        rows.append((summary["model"], label,
                     summary["test_nll_mean"], summary["test_nll_std"]))
        if label not in true_rows and os.path.exists(dataset):
            config = RunConfig(**summary["config"])
            true = _true_model_row(summary.get("dataset_metadata", {}),
                                   dataset, config)
            if true is not None:
                true_rows[label] = true
    for label, (mean, std) in sorted(true_rows.items()):
        rows.append(("true", label, mean, std))
    rows.sort(key=lambda r: (r[1], r[0]))

    out_path = args.out or "comparison.csv"
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "dataset", "test_nll_mean", "test_nll_std"])
        for row in rows:
            writer.writerow(row)
    header = f"{'model':10s} {'dataset':12s} {'NLL mean':>10s} {'std':>8s}"
    print(header)
    print("-" * len(header))
    for model, label, mean, std in rows:
        print(f"{model:10s} {label:12s} {mean:10.4f} {std:8.4f}")
    if missing:
        print(f"missing runs (skipped): {', '.join(missing)}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdftpp",
        description="Temporal point process experiments over a monotone "
                    "conditional-CDF model and baselines.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("dataset", choices=sg.DATASET_NAMES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sequences", type=int, default=100)
    p.add_argument("--max-events", type=int, default=128)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train", help="train one model over split repeats")
    p.add_argument("model", choices=MODEL_NAMES)
    p.add_argument("data")
    p.add_argument("--config", help="JSON file mirroring RunConfig")
    p.add_argument("--seed", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--fusion", choices=("product", "add"))
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="per-event NLL of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.add_argument("--max-seq-len", type=int, default=128)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("intensity-curve",
                       help="CSV of model vs true intensity on a time grid")
    p.add_argument("checkpoint", help="checkpoint path, or 'true' for the "
                                      "generating-model surrogate")
    p.add_argument("data")
    p.add_argument("--sequence-index", type=int, default=0)
    p.add_argument("--grid-step", type=float, default=0.1)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_intensity_curve)

    p = sub.add_parser("density-curve",
                       help="CSV of the conditional density on a tau grid")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.add_argument("--sequence-index", type=int, default=0)
    p.add_argument("--event-index", type=int)
    p.add_argument("--tau-max", type=float, default=10.0)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_density_curve)

    p = sub.add_parser("ablation",
                       help="product vs add fusion, branch magnitudes per epoch")
    p.add_argument("data")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_ablation)

    p = sub.add_parser("compare", help="NLL table across completed runs")
    p.add_argument("runs", nargs="*")
    p.add_argument("--plan", help="JSON file with a 'runs' list")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, DataFormatError, GenerationError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TrainingAbort, EvaluationError) as err:
        print(f"training abort: {err}", file=sys.stderr)
        diagnostics = getattr(err, "diagnostics", None)
        if diagnostics:
            print(json.dumps(diagnostics, indent=2), file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
