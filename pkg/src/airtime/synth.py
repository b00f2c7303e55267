"""Synthetic benchmark generator: random topologies, loads, and label rules.

Two scenario families: neighbor-sum labels, and the same with one anomalous
node of fixed index whose label is always zero. Training draws topologies
uniformly from k fixed graphs; validation draws a fresh graph per sample, so
the gap between the two measures topology generalization. Generation is pure
given (config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .baselines import simple_sum
from .telemetry import Dataset, LabeledSample, Topology

LOAD_MIN = 0.01
LOAD_MAX = 1.0


@dataclass(frozen=True)
class SynthConfig:
    n: int = 10
    p: float = 0.2
    k: int = 1
    train_size: int = 6000
    val_size: int = 2000
    label_kind: str = "simple-sum"  # or "single-failure"
    failure_index: int = 0
    node_ids: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.label_kind not in ("simple-sum", "single-failure"):
            raise ValueError(f"unknown label_kind {self.label_kind!r}")
        if self.label_kind == "single-failure" and not 0 <= self.failure_index < self.n:
            raise ValueError(f"failure_index {self.failure_index} out of range for n={self.n}")


def gen_erdos_renyi(n: int, p: float, rng: np.random.Generator) -> Topology:
    """G(n, p): each unordered pair is an edge independently with probability p."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    iu = np.triu_indices(n, k=1)
    edges = rng.random(len(iu[0])) < p
    adj = np.zeros((n, n), dtype=bool)
    adj[iu] = edges
    adj |= adj.T
    return Topology(adjacency=adj)


def gen_loads(n: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. uniform loads on [0.01, 1]."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return LOAD_MIN + (LOAD_MAX - LOAD_MIN) * rng.random(n)


def label_simple_sum(loads: np.ndarray, topo: Topology) -> np.ndarray:
    """Groundtruth = unclipped sum of one-hop neighbor loads."""
    return simple_sum(loads, topo, clip=False)


def label_single_failure(loads: np.ndarray, topo: Topology, failure_index: int) -> np.ndarray:
    """Neighbor-sum labels with the anomalous node forced to zero.

    The failed node's load still contributes to its neighbors' sums; only its
    own label is zeroed.
    """
    if not 0 <= failure_index < topo.n:
        raise ValueError(f"failure_index {failure_index} out of range for n={topo.n}")
    labels = label_simple_sum(loads, topo)
    labels[failure_index] = 0.0
    return labels


def augment_node_ids(features: np.ndarray, max_n: int) -> np.ndarray:
    """Append a one-hot node-index block; columns past n-1 stay zero."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {features.shape}")
    n = features.shape[0]
    if n > max_n:
        raise ValueError(f"n={n} exceeds max_n={max_n}")
    one_hot = np.zeros((n, max_n))
    one_hot[np.arange(n), np.arange(n)] = 1.0
    return np.concatenate([features, one_hot], axis=1)


def _make_sample(topo: Topology, loads: np.ndarray, config: SynthConfig,
                 rssi: np.ndarray | None = None) -> LabeledSample:
    if config.label_kind == "single-failure":
        labels = label_single_failure(loads, topo, config.failure_index)
    else:
        labels = label_simple_sum(loads, topo)
    features = loads.reshape(-1, 1)
    if config.node_ids:
        features = augment_node_ids(features, config.n)
    return LabeledSample(features=features, topology=topo, labels=labels, rssi=rssi)


def build_k_topology_experiment(config: SynthConfig,
                                rng: np.random.Generator | None = None
                                ) -> tuple[Dataset, Dataset, list[Topology]]:
    """Draw k fixed topologies, then (train, val) datasets.

    Every training sample pairs fresh loads with one of the k fixed graphs,
    chosen uniformly; every validation sample gets a freshly drawn graph.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    fixed = [gen_erdos_renyi(config.n, config.p, rng) for _ in range(config.k)]
    choices = rng.integers(0, config.k, size=config.train_size)
    train = [_make_sample(fixed[c], gen_loads(config.n, rng), config) for c in choices]
    val = [_make_sample(gen_erdos_renyi(config.n, config.p, rng), gen_loads(config.n, rng), config)
           for _ in range(config.val_size)]
    return (Dataset(tuple(train), role="train"),
            Dataset(tuple(val), role="val"),
            fixed)


def jittered_rssi(topo: Topology, rng: np.random.Generator,
                  threshold: float = -82.0, jitter: float = 10.0) -> np.ndarray:
    """Symmetric RSSI surrogate with edges just above and non-edges just below a threshold.

    Edges get threshold + U(0, jitter) dBm, non-edges threshold - U(0, jitter),
    so the raw-RSSI kernel carries threshold-relevant signal while the
    thresholded adjacency stays recoverable.
    """
    n = topo.n
    iu = np.triu_indices(n, k=1)
    offsets = rng.uniform(0.0, jitter, size=len(iu[0]))
    vals = np.where(topo.adjacency[iu], threshold + offsets, threshold - offsets)
    vals = np.clip(vals, -100.0, 0.0)
    rssi = np.full((n, n), -100.0)
    rssi[iu] = vals
    rssi.T[iu] = vals
    np.fill_diagonal(rssi, -100.0)
    return rssi


def make_ablation_benchmark(config: SynthConfig,
                            jitter: float = 10.0,
                            rng: np.random.Generator | None = None) -> tuple[Dataset, Dataset]:
    """Noisy-RSSI benchmark for the kernel ablation.

    Labels come from the true (jitter-free) adjacency; samples carry only the
    jittered RSSI, so an estimator sees clean structure only through the
    adjacency kernel.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)

    def draw() -> LabeledSample:
        topo = gen_erdos_renyi(config.n, config.p, rng)
        loads = gen_loads(config.n, rng)
        return _make_sample(topo, loads, config, rssi=jittered_rssi(topo, rng, jitter=jitter))

    train = [draw() for _ in range(config.train_size)]
    val = [draw() for _ in range(config.val_size)]
    return Dataset(tuple(train), role="train"), Dataset(tuple(val), role="val")


def derive_config(config: SynthConfig, repetition: int) -> SynthConfig:
    """Config for one repetition of a sweep: seed shifted by the repetition index."""
    return replace(config, seed=config.seed + repetition)
