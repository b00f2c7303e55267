"""Experiment protocols: topology-generalization sweeps, kernel ablation,
cross-network transfer, and spatio-temporal correlation heatmaps.

Sweep repetitions are independent given their derived seeds (base seed +
repetition index), so they can run in worker processes without changing
results; rows are always collected in repetition order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import stats as scipy_stats

from .baselines import Estimator
from .models import Model, build_model, strip_node_ids
from .synth import SynthConfig, build_k_topology_experiment, make_ablation_benchmark
from .telemetry import (CCA_THRESHOLD_DBM, Dataset, LabeledSample, TelemetrySample,
                        derive_adjacency, symmetrize_rssi)
from .training import MetricsReport, TrainConfig, TrainResult, evaluate, train

DEFAULT_REPETITIONS = 30


@dataclass(frozen=True)
class ModelSpec:
    """Which estimator to train: architecture plus its input options."""

    kind: str  # gcn | mlp | lstm
    node_ids: bool = False
    include_adjacency_kernel: bool = False

    def build(self, max_n: int, rng: np.random.Generator) -> Model:
        return build_model(self.kind, max_n=max_n, node_ids=self.node_ids,
                           include_adjacency_kernel=self.include_adjacency_kernel, rng=rng)


@dataclass(frozen=True)
class SweepRow:
    k: int
    mean_val_mse: float
    std_val_mse: float
    repetitions: int
    val_mses: tuple[float, ...]


def run_single_experiment(model_spec: ModelSpec, synth_config: SynthConfig,
                          train_config: TrainConfig) -> TrainResult:
    """One seeded experiment: generate data, build the model, train to convergence."""
    rng = np.random.default_rng(synth_config.seed)
    train_set, val_set, _ = build_k_topology_experiment(synth_config, rng)
    model = model_spec.build(max_n=synth_config.n, rng=rng)
    return train(model, train_set, val_set, replace(train_config, seed=synth_config.seed))


def _sweep_task(args) -> float:
    model_spec, synth_config, train_config = args
    return run_single_experiment(model_spec, synth_config, train_config).best_val_loss


def run_k_sweep(model_spec: ModelSpec, k_values: Sequence[int],
                repetitions: int = DEFAULT_REPETITIONS,
                synth_config: SynthConfig | None = None,
                train_config: TrainConfig | None = None,
                seed: int = 0, workers: int = 1) -> list[SweepRow]:
    """Validation MSE as a function of the number of fixed training topologies.

    Each (k, repetition) cell is a fresh experiment with seed = base + index;
    rows report mean and std of the best validation MSE over repetitions.
    """
    if synth_config is None:
        synth_config = SynthConfig()
    if train_config is None:
        train_config = TrainConfig()
    rows = []
    for k in k_values:
        tasks = [(model_spec, replace(synth_config, k=k, seed=seed + rep), train_config)
                 for rep in range(repetitions)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                mses = list(pool.map(_sweep_task, tasks))
        else:
            mses = [_sweep_task(t) for t in tasks]
        rows.append(SweepRow(k=int(k), mean_val_mse=float(np.mean(mses)),
                             std_val_mse=float(np.std(mses)), repetitions=repetitions,
                             val_mses=tuple(mses)))
    return rows


def kernel_ablation(train_set: Dataset, val_set: Dataset,
                    train_config: TrainConfig | None = None,
                    max_n: int | None = None) -> tuple[float, float]:
    """Validation MAE of a 2-kernel GCN vs one that also sees the adjacency kernel.

    Both models share the seed and training budget; only the kernel set
    differs. Datasets must carry RSSI matrices.
    """
    if train_config is None:
        train_config = TrainConfig()
    for s in list(train_set) + list(val_set):
        if s.rssi is None:
            raise ValueError("kernel ablation needs RSSI matrices on every sample")
    if max_n is None:
        max_n = max(s.n for s in train_set)
    maes = []
    for include_t3 in (False, True):
        spec = ModelSpec(kind="gcn", include_adjacency_kernel=include_t3)
        model = spec.build(max_n=max_n, rng=np.random.default_rng(train_config.seed))
        train(model, train_set, val_set, train_config)
        report, _ = evaluate(model, val_set)
        maes.append(report.mae)
    return maes[0], maes[1]


def transfer_evaluate(model: Model, dataset: Dataset | Sequence[LabeledSample],
                      high_load_only: bool = True,
                      high_load_threshold: float = 0.10) -> tuple[MetricsReport, np.ndarray]:
    """Apply a trained model to a foreign network: pad, zero node IDs, evaluate.

    Node-ID one-hot blocks are tied to the training network's indexing, so
    foreign samples get a zeroed ID block.
    """
    samples = list(dataset)
    too_big = [s.n for s in samples if s.n > model.max_n]
    if too_big:
        raise ValueError(f"network exceeds model capacity: n={max(too_big)} > max_n={model.max_n}")
    needs_ids = getattr(model, "node_ids", False)
    if needs_ids:
        samples = [strip_node_ids(_with_id_block(s, model.max_n)) for s in samples]
    return evaluate(model, samples, high_load_only=high_load_only,
                    high_load_threshold=high_load_threshold)


def _with_id_block(sample: LabeledSample, max_n: int) -> LabeledSample:
    """Give a bare-feature sample a zero ID block of the model's width."""
    if sample.features.shape[1] > 1:
        return sample
    features = np.concatenate([sample.features, np.zeros((sample.n, max_n))], axis=1)
    return replace(sample, features=features)


# ---------------------------------------------------------------------------
# spatio-temporal correlation


@dataclass(frozen=True)
class HeatmapResult:
    """Pearson r and two-sided p per (AP, hour-of-day); NaN marks undefined cells."""

    r: np.ndarray  # (n_aps, 24)
    p: np.ndarray  # (n_aps, 24)
    counts: np.ndarray  # (n_aps, 24) samples per cell


def pearson_r(x: np.ndarray, y: np.ndarray) -> float:
    """Plain Pearson correlation; NaN when either side has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xd = x - x.mean()
    yd = y - y.mean()
    denom = np.sqrt(np.sum(xd * xd) * np.sum(yd * yd))
    if denom == 0.0:
        return float("nan")
    return float(np.sum(xd * yd) / denom)


def pearson_p_value(r: float, m: int) -> float:
    """Two-sided p via the t statistic r*sqrt((m-2)/(1-r^2)) with m-2 dof."""
    if not np.isfinite(r) or m < 3:
        return float("nan")
    if abs(r) >= 1.0:
        return 0.0
    t = r * np.sqrt((m - 2) / (1.0 - r * r))
    return float(2.0 * scipy_stats.t.sf(abs(t), df=m - 2))


def pearson_heatmap(samples: Sequence[TelemetrySample], estimator: Estimator,
                    threshold: float = CCA_THRESHOLD_DBM,
                    min_samples: int = 3) -> HeatmapResult:
    """Correlate measured vs estimated interference per AP and hour of day.

    Cells with fewer than ``min_samples`` samples or zero variance are left
    undefined (NaN) rather than raising.
    """
    if len(samples) == 0:
        raise ValueError("empty samples")
    n = samples[0].ap_count
    measured: list[list[list[float]]] = [[[] for _ in range(24)] for _ in range(n)]
    estimated: list[list[list[float]]] = [[[] for _ in range(24)] for _ in range(n)]
    for s in samples:
        if s.ap_count != n:
            raise ValueError("samples must share a common AP count")
        topo = derive_adjacency(symmetrize_rssi(s.rssi), threshold)
        est = estimator(s, topo)
        hour = s.timestamp.hour
        for a in range(n):
            measured[a][hour].append(float(s.interference[a]))
            estimated[a][hour].append(float(est[a]))
    r = np.full((n, 24), np.nan)
    p = np.full((n, 24), np.nan)
    counts = np.zeros((n, 24), dtype=int)
    for a in range(n):
        for h in range(24):
            m = len(measured[a][h])
            counts[a, h] = m
            if m < min_samples:
                continue
            r_ah = pearson_r(np.array(measured[a][h]), np.array(estimated[a][h]))
            r[a, h] = r_ah
            p[a, h] = pearson_p_value(r_ah, m)
    return HeatmapResult(r=r, p=p, counts=counts)


__all__ = [
    "ModelSpec", "SweepRow", "HeatmapResult",
    "run_single_experiment", "run_k_sweep", "kernel_ablation",
    "transfer_evaluate", "pearson_heatmap", "pearson_r", "pearson_p_value",
    "make_ablation_benchmark",
]
