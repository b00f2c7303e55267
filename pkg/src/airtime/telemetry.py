"""Core data model: per-AP telemetry snapshots, loads, RSSI, and adjacency.

A telemetry sample is one 10-minute snapshot of a WLAN: per-AP airtime
fractions (tx, rx, measured interference) plus the directed pairwise RSSI
matrix in dBm. Missing RSSI entries carry the sentinel -100 dBm, the minimum
reportable value. All operations here are pure; values are treated as
immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Iterator, Sequence

import numpy as np

RSSI_SENTINEL_DBM = -100.0
CCA_THRESHOLD_DBM = -82.0
HIGH_LOAD_THRESHOLD = 0.10


def _as_fraction_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if np.any(v < 0.0) or np.any(v > 1.0):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    return v


@dataclass(frozen=True)
class TelemetrySample:
    """One (network, timestamp) snapshot: airtime fractions and directed RSSI.

    ``rssi[a, b]`` is the average RSSI of AP b as heard at AP a; the diagonal
    is unused and missing pairs hold the -100 dBm sentinel.
    """

    network_id: str
    timestamp: datetime
    tx_time: np.ndarray
    rx_time: np.ndarray
    interference: np.ndarray
    rssi: np.ndarray
    ap_ids: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tx_time", _as_fraction_vector(self.tx_time, "tx_time"))
        object.__setattr__(self, "rx_time", _as_fraction_vector(self.rx_time, "rx_time"))
        object.__setattr__(self, "interference", _as_fraction_vector(self.interference, "interference"))
        n = self.tx_time.shape[0]
        if self.rx_time.shape[0] != n or self.interference.shape[0] != n:
            raise ValueError("tx_time, rx_time, interference must have equal length")
        rssi = np.asarray(self.rssi, dtype=np.float64)
        if rssi.shape != (n, n):
            raise ValueError(f"rssi must be ({n}, {n}), got {rssi.shape}")
        if np.any(rssi < -100.0) or np.any(rssi > 0.0):
            raise ValueError("rssi entries must lie in [-100, 0] dBm")
        object.__setattr__(self, "rssi", rssi)
        if self.ap_ids and len(self.ap_ids) != n:
            raise ValueError("ap_ids length must match ap count")
        if self.timestamp.tzinfo is None:
            object.__setattr__(self, "timestamp", self.timestamp.replace(tzinfo=timezone.utc))

    @property
    def ap_count(self) -> int:
        return self.tx_time.shape[0]


@dataclass(frozen=True)
class Topology:
    """Symmetric boolean AP adjacency with an empty diagonal.

    Self-connections are added only inside kernel construction, never here.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got {adj.shape}")
        if np.any(adj != adj.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(adj)):
            raise ValueError("adjacency diagonal must be empty (no self-loops)")
        object.__setattr__(self, "adjacency", adj)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, a: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[a])

    def edge_count(self) -> int:
        return int(self.adjacency.sum()) // 2


@dataclass(frozen=True)
class LabeledSample:
    """(features, topology, label vector) for training and evaluation.

    Feature column 0 is the load; an optional one-hot node-ID block follows.
    ``mask`` marks real (non-pad) nodes; None means every node is real.
    """

    features: np.ndarray
    topology: Topology
    labels: np.ndarray
    rssi: np.ndarray | None = None
    mask: np.ndarray | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {feats.shape}")
        labels = np.asarray(self.labels, dtype=np.float64)
        n = feats.shape[0]
        if labels.shape != (n,):
            raise ValueError(f"labels must be ({n},), got {labels.shape}")
        if self.topology.n != n:
            raise ValueError("topology size must match feature rows")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        if self.rssi is not None:
            rssi = np.asarray(self.rssi, dtype=np.float64)
            if rssi.shape != (n, n):
                raise ValueError(f"rssi must be ({n}, {n}), got {rssi.shape}")
            object.__setattr__(self, "rssi", rssi)
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=np.float64)
            if mask.shape != (n,):
                raise ValueError(f"mask must be ({n},), got {mask.shape}")
            object.__setattr__(self, "mask", mask)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def loads(self) -> np.ndarray:
        return self.features[:, 0]

    @property
    def real_mask(self) -> np.ndarray:
        return np.ones(self.n) if self.mask is None else self.mask

    @property
    def real_count(self) -> int:
        return self.n if self.mask is None else int(self.mask.sum())


@dataclass(frozen=True)
class Dataset:
    samples: tuple[LabeledSample, ...]
    role: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[LabeledSample]:
        return iter(self.samples)

    def __getitem__(self, i: int) -> LabeledSample:
        return self.samples[i]

    def with_role(self, role: str) -> "Dataset":
        return replace(self, role=role)


# ---------------------------------------------------------------------------
# operations


def load_from_telemetry(sample: TelemetrySample) -> np.ndarray:
    """Per-AP load: tx + rx airtime, clipped at 1 (airtime cannot exceed 100%)."""
    return np.minimum(sample.tx_time + sample.rx_time, 1.0)


def symmetrize_rssi(rssi: np.ndarray) -> np.ndarray:
    """Average the two directions; a sentinel paired with a real value yields the real value."""
    rssi = np.asarray(rssi, dtype=np.float64)
    if rssi.ndim != 2 or rssi.shape[0] != rssi.shape[1]:
        raise ValueError(f"rssi must be square, got {rssi.shape}")
    fwd_missing = rssi == RSSI_SENTINEL_DBM
    bwd_missing = fwd_missing.T
    out = 0.5 * (rssi + rssi.T)
    out = np.where(fwd_missing & ~bwd_missing, rssi.T, out)
    out = np.where(bwd_missing & ~fwd_missing, rssi, out)
    return out


def derive_adjacency(rssi: np.ndarray, threshold: float = CCA_THRESHOLD_DBM) -> Topology:
    """Two APs are neighbors iff their symmetric RSSI meets the sensing threshold."""
    if not -100.0 <= threshold <= -40.0:
        raise ValueError(f"threshold must lie in [-100, -40] dBm, got {threshold}")
    rssi = np.asarray(rssi, dtype=np.float64)
    adj = rssi >= threshold
    np.fill_diagonal(adj, False)
    return Topology(adjacency=adj)


def neighborhood_probability(samples: Sequence[TelemetrySample],
                             threshold: float = CCA_THRESHOLD_DBM) -> np.ndarray:
    """Per-pair fraction of samples in which the two APs are neighbors."""
    if len(samples) == 0:
        raise ValueError("empty dataset")
    n = samples[0].ap_count
    counts = np.zeros((n, n))
    for s in samples:
        if s.ap_count != n:
            raise ValueError("samples must share a common AP count")
        topo = derive_adjacency(symmetrize_rssi(s.rssi), threshold)
        counts += topo.adjacency
    return counts / len(samples)


def high_load_filter(dataset: Dataset, threshold: float = HIGH_LOAD_THRESHOLD) -> Dataset:
    """Keep a snapshot iff at least one real node's groundtruth interference meets the threshold.

    Whole-sample granularity: models predict the full per-node vector jointly.
    """
    kept = [s for s in dataset if is_high_load(s, threshold)]
    return Dataset(samples=tuple(kept), role=dataset.role)


def is_high_load(sample: LabeledSample, threshold: float = HIGH_LOAD_THRESHOLD) -> bool:
    real = sample.real_mask > 0
    return bool(np.any(sample.labels[real] >= threshold))
