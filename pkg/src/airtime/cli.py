"""Command-line surface: dataset generation, training, evaluation, sweeps,
ablation, heatmaps, and what-if prediction.

Every subcommand is seeded and bit-reproducible. Failures print a JSON error
object to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np

from . import autodiff as ad
from . import fileio
from .baselines import (DEFAULT_SWEEP_THRESHOLDS_DBM, ESTIMATORS, simple_sum,
                        threshold_sweep, uniform_superposition)
from .experiments import (ModelSpec, kernel_ablation, pearson_heatmap, run_k_sweep,
                          transfer_evaluate)
from .models import Model, build_model, pad_inputs
from .synth import SynthConfig, build_k_topology_experiment, make_ablation_benchmark
from .telemetry import CCA_THRESHOLD_DBM, Dataset, LabeledSample, Topology, derive_adjacency
from .training import TrainConfig, evaluate, oversample_high_load, train


class CliError(Exception):
    def __init__(self, message: str, kind: str = "error", code: int = 1):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message, kind="usage", code=2)


def whatif_predict(model: Model, scenario: dict) -> list[dict]:
    """Per-AP interference estimates for a hypothetical (loads, topology) scenario.

    Returns one row per AP with the model estimate next to both closed-form
    baselines for comparison.
    """
    loads = scenario["loads"]
    n = loads.size
    if n > model.max_n:
        raise CliError(f"network exceeds model capacity: n={n} > max_n={model.max_n}")
    rssi = scenario.get("rssi")
    if rssi is not None:
        topo = derive_adjacency(rssi, scenario.get("threshold_dbm", CCA_THRESHOLD_DBM))
    else:
        topo = Topology(adjacency=scenario["adjacency"])
    features = loads.reshape(-1, 1)
    if getattr(model, "node_ids", False):
        features = np.concatenate([features, np.zeros((n, model.max_n))], axis=1)
    sample = LabeledSample(features=features, topology=topo,
                           labels=np.zeros(n), rssi=rssi)
    padded = pad_inputs(sample, model.max_n)
    prep = model.prepare([padded])
    with ad.no_grad():
        out = model.forward_prepared(prep, np.array([0]), training=False)
    est = model.reshape_predictions(out.data, 1, model.max_n)[0, :n]
    ss = simple_sum(loads, topo)
    us = uniform_superposition(loads, topo)
    return [
        {"ap_id": scenario["ap_ids"][i], "model_estimate": float(est[i]),
         "simple_sum": float(ss[i]), "uniform_superposition": float(us[i])}
        for i in range(n)
    ]


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth_gen(args) -> int:
    config = SynthConfig(n=args.n, p=args.p, k=args.k, train_size=args.train_size,
                         val_size=args.val_size, label_kind=args.label_kind,
                         failure_index=args.failure_index, node_ids=args.node_ids,
                         seed=args.seed)
    if args.rssi_jitter is not None:
        train_set, val_set = make_ablation_benchmark(config, jitter=args.rssi_jitter)
    else:
        train_set, val_set, _ = build_k_topology_experiment(config)
    fileio.save_dataset(train_set, args.out_train)
    fileio.save_dataset(val_set, args.out_val)
    print(f"wrote {len(train_set)} train samples to {args.out_train}, "
          f"{len(val_set)} val samples to {args.out_val}")
    return 0


def _load_eval_data(args) -> Dataset:
    if args.data:
        return fileio.load_dataset(args.data)
    if not args.telemetry:
        raise CliError("provide --data or --telemetry (with optional --rssi)")
    samples = fileio.parse_telemetry(list(args.telemetry) + list(args.rssi or []))
    return fileio.dataset_from_telemetry(samples, threshold=args.adjacency_threshold)


def _train_config(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                       optimizer=args.optimizer, seed=args.seed,
                       oversample_factor=args.oversample_factor,
                       high_load_threshold=args.high_load_threshold,
                       patience=args.patience)


def _cmd_train(args) -> int:
    config = _train_config(args)
    if args.train_data:
        train_set = fileio.load_dataset(args.train_data)
        val_set = fileio.load_dataset(args.val_data)
    else:
        if not args.telemetry:
            raise CliError("provide --train-data/--val-data or --telemetry with --split-time")
        if not args.split_time:
            raise CliError("--telemetry training needs --split-time (ISO-8601)")
        samples = fileio.parse_telemetry(list(args.telemetry) + list(args.rssi or []))
        try:
            split = datetime.fromisoformat(args.split_time.replace("Z", "+00:00"))
        except ValueError:
            raise CliError(f"bad --split-time {args.split_time!r} (expected ISO-8601)") from None
        if split.tzinfo is None:
            split = split.replace(tzinfo=timezone.utc)
        train_samples = [s for s in samples if s.timestamp < split]
        val_samples = [s for s in samples if s.timestamp >= split]
        if not train_samples or not val_samples:
            raise CliError("split-time leaves an empty train or validation period")
        train_set = fileio.dataset_from_telemetry(train_samples, threshold=args.adjacency_threshold,
                                                  node_ids=args.node_ids)
        val_set = fileio.dataset_from_telemetry(val_samples, threshold=args.adjacency_threshold,
                                                node_ids=args.node_ids).with_role("val")
    train_set = oversample_high_load(train_set, config.oversample_factor,
                                     config.high_load_threshold, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    model = build_model(args.model, max_n=args.max_n, node_ids=args.node_ids,
                        include_adjacency_kernel=args.kernels == 3, rng=rng)
    result = train(model, train_set, val_set, config)
    fileio.save_checkpoint(model, args.out, seed=config.seed,
                           config_hash=fileio.config_digest(config), source=args.source)
    if args.history_out:
        fileio.save_history_csv(result.train_losses, result.val_losses, args.history_out)
    print(f"best val MSE {result.best_val_loss:.6g} at epoch {result.best_epoch}; "
          f"checkpoint -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    model = fileio.load_checkpoint(args.checkpoint)
    dataset = _load_eval_data(args)
    if args.transfer:
        report, errors = transfer_evaluate(model, dataset, high_load_only=args.high_load_only,
                                           high_load_threshold=args.high_load_threshold)
    else:
        report, errors = evaluate(model, dataset, high_load_only=args.high_load_only,
                                  high_load_threshold=args.high_load_threshold)
    fileio.save_report(report, args.out)
    if args.errors_out:
        fileio.save_errors_csv(errors, args.errors_out)
    print(json.dumps(report.as_dict(), sort_keys=True))
    return 0


def _cmd_sweep_k(args) -> int:
    spec = ModelSpec(kind=args.model, node_ids=args.node_ids,
                     include_adjacency_kernel=args.kernels == 3)
    synth_config = SynthConfig(n=args.n, p=args.p, train_size=args.train_size,
                               val_size=args.val_size, label_kind=args.label_kind,
                               failure_index=args.failure_index, node_ids=args.node_ids,
                               seed=args.seed)
    train_config = _train_config(args)
    rows = run_k_sweep(spec, args.k_values, repetitions=args.repetitions,
                       synth_config=synth_config, train_config=train_config,
                       seed=args.seed, workers=args.workers)
    fileio.save_table_csv(
        ({"model": args.model, "k": r.k, "mean_val_mse": r.mean_val_mse,
          "std_val_mse": r.std_val_mse, "repetitions": r.repetitions} for r in rows),
        args.out, ["model", "k", "mean_val_mse", "std_val_mse", "repetitions"])
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_sweep_threshold(args) -> int:
    samples = fileio.parse_telemetry(list(args.telemetry) + list(args.rssi or []))
    thresholds = [float(t) for t in np.arange(args.min_dbm, args.max_dbm + 1e-9, args.step_dbm)]
    rows = threshold_sweep(samples, thresholds, ESTIMATORS[args.estimator])
    fileio.save_table_csv(rows, args.out,
                          ["threshold_dbm", "p5", "p25", "p50", "p75", "p95", "node_count"])
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_ablate_kernels(args) -> int:
    train_config = _train_config(args)
    rows = []
    for run in range(args.runs):
        seed = args.seed + run
        config = SynthConfig(n=args.n, p=args.p, train_size=args.train_size,
                             val_size=args.val_size, seed=seed)
        train_set, val_set = make_ablation_benchmark(config, jitter=args.rssi_jitter)
        mae2, mae3 = kernel_ablation(train_set, val_set,
                                     replace(train_config, seed=seed), max_n=args.n)
        rows.append({"run": run, "seed": seed, "mae_2_kernels": mae2, "mae_3_kernels": mae3,
                     "ratio": mae3 / mae2 if mae2 > 0 else float("nan")})
    fileio.save_table_csv(rows, args.out,
                          ["run", "seed", "mae_2_kernels", "mae_3_kernels", "ratio"])
    wins = sum(1 for r in rows if r["mae_3_kernels"] <= r["mae_2_kernels"])
    print(f"3-kernel GCN at or below 2-kernel MAE in {wins}/{len(rows)} runs; wrote {args.out}")
    return 0


def _cmd_heatmap(args) -> int:
    samples = fileio.parse_telemetry(list(args.telemetry) + list(args.rssi or []))
    result = pearson_heatmap(samples, ESTIMATORS[args.estimator],
                             threshold=args.adjacency_threshold, min_samples=args.min_samples)
    n = result.r.shape[0]
    rows = [{"ap": a, "hour": h, "pearson_r": float(result.r[a, h]),
             "p_value": float(result.p[a, h]), "count": int(result.counts[a, h])}
            for a in range(n) for h in range(24)]
    fileio.save_table_csv(rows, args.out, ["ap", "hour", "pearson_r", "p_value", "count"])
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_predict(args) -> int:
    model = fileio.load_checkpoint(args.checkpoint)
    scenario = fileio.load_scenario(args.scenario)
    rows = whatif_predict(model, scenario)
    columns = ["ap_id", "model_estimate", "simple_sum", "uniform_superposition"]
    if args.out:
        fileio.save_table_csv(rows, args.out, columns)
    writer = sys.stdout
    writer.write(",".join(columns) + "\n")
    for row in rows:
        writer.write(",".join(str(row[c]) for c in columns) + "\n")
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def _add_train_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=TrainConfig.lr)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default=TrainConfig.optimizer)
    p.add_argument("--patience", type=int, default=TrainConfig.patience)
    p.add_argument("--oversample-factor", type=int, default=TrainConfig.oversample_factor)
    p.add_argument("--high-load-threshold", type=float, default=TrainConfig.high_load_threshold)
    p.add_argument("--seed", type=int, default=0)


def _add_model_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=["gcn", "mlp", "lstm"], default="gcn")
    p.add_argument("--max-n", type=int, default=128)
    p.add_argument("--node-ids", action="store_true")
    p.add_argument("--kernels", type=int, choices=[2, 3], default=3,
                   help="GCN kernel count: 2 = identity+RSSI, 3 adds the adjacency kernel")


def _add_telemetry_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--telemetry", action="append", default=[], help="telemetry CSV (repeatable)")
    p.add_argument("--rssi", action="append", default=[], help="RSSI CSV (repeatable)")
    p.add_argument("--adjacency-threshold", type=float, default=CCA_THRESHOLD_DBM)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="airtime", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", help="generate a synthetic benchmark dataset")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--p", type=float, default=0.2)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--train-size", type=int, default=6000)
    p.add_argument("--val-size", type=int, default=2000)
    p.add_argument("--label-kind", choices=["simple-sum", "single-failure"], default="simple-sum")
    p.add_argument("--failure-index", type=int, default=0)
    p.add_argument("--node-ids", action="store_true")
    p.add_argument("--rssi-jitter", type=float, default=None,
                   help="emit jittered RSSI matrices (ablation benchmark)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-val", required=True)
    p.set_defaults(func=_cmd_synth_gen)

    p = sub.add_parser("train", help="train a model on a dataset or telemetry period")
    p.add_argument("--train-data")
    p.add_argument("--val-data")
    _add_telemetry_opts(p)
    p.add_argument("--split-time", help="ISO-8601 boundary between train and val periods")
    _add_model_opts(p)
    _add_train_opts(p)
    p.add_argument("--source", default=None, help="network id recorded in checkpoint metadata")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history-out", default=None, help="loss history CSV")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset JSON")
    _add_telemetry_opts(p)
    p.add_argument("--high-load-only", action="store_true")
    p.add_argument("--high-load-threshold", type=float, default=0.10)
    p.add_argument("--transfer", action="store_true",
                   help="treat the data as a foreign network (pad, zero node IDs)")
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--errors-out", default=None, help="per-node absolute errors CSV")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep-k", help="validation MSE vs number of fixed training topologies")
    p.add_argument("--k-values", type=lambda s: [int(x) for x in s.split(",")],
                   default=[1, 2, 4, 8], help="comma-separated k list")
    p.add_argument("--repetitions", type=int, default=30)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--p", type=float, default=0.2)
    p.add_argument("--train-size", type=int, default=6000)
    p.add_argument("--val-size", type=int, default=2000)
    p.add_argument("--label-kind", choices=["simple-sum", "single-failure"], default="simple-sum")
    p.add_argument("--failure-index", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    _add_model_opts(p)
    _add_train_opts(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep_k)

    p = sub.add_parser("sweep-threshold", help="baseline error percentiles over sensing thresholds")
    _add_telemetry_opts(p)
    p.add_argument("--estimator", choices=sorted(ESTIMATORS), default="simple-sum")
    p.add_argument("--min-dbm", type=float, default=DEFAULT_SWEEP_THRESHOLDS_DBM[0])
    p.add_argument("--max-dbm", type=float, default=DEFAULT_SWEEP_THRESHOLDS_DBM[-1])
    p.add_argument("--step-dbm", type=float, default=2.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep_threshold)

    p = sub.add_parser("ablate-kernels", help="2- vs 3-kernel GCN on the noisy-RSSI benchmark")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--p", type=float, default=0.2)
    p.add_argument("--train-size", type=int, default=1200)
    p.add_argument("--val-size", type=int, default=400)
    p.add_argument("--rssi-jitter", type=float, default=10.0)
    _add_train_opts(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ablate_kernels)

    p = sub.add_parser("heatmap", help="per-AP, per-hour Pearson correlation heatmap")
    _add_telemetry_opts(p)
    p.add_argument("--estimator", choices=sorted(ESTIMATORS), default="simple-sum")
    p.add_argument("--min-samples", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_heatmap)

    p = sub.add_parser("predict", help="what-if estimates for a scenario file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_predict)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as e:
        sys.stderr.write(json.dumps({"error": e.kind, "message": str(e)}) + "\n")
        return e.code
    except Exception as e:  # noqa: BLE001 - CLI boundary
        sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
