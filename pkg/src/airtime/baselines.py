"""Closed-form interference estimators and the slot-level stochastic oracle.

The simple sum adds the loads of every sensing neighbor and so overestimates
whenever neighbors transmit concurrently. The uniform superposition corrects
for that by treating each neighbor's transmissions as spread independently
and uniformly over the period, giving 1 - prod(1 - load_b). The Monte Carlo
slot simulation is the independent check that the product formula is the
right expectation.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .telemetry import TelemetrySample, Topology, derive_adjacency, load_from_telemetry, symmetrize_rssi

DEFAULT_SWEEP_THRESHOLDS_DBM = tuple(float(t) for t in range(-100, -60, 2))
ERROR_PERCENTILES = (5.0, 25.0, 50.0, 75.0, 95.0)

Estimator = Callable[[TelemetrySample, Topology], np.ndarray]


def simple_sum(loads: np.ndarray, topo: Topology, clip: bool = True) -> np.ndarray:
    """Interference as the plain sum of neighbor loads, optionally clipped at 1."""
    loads = np.asarray(loads, dtype=np.float64)
    if loads.shape != (topo.n,):
        raise ValueError(f"loads shape {loads.shape} does not match topology n={topo.n}")
    est = topo.adjacency.astype(np.float64) @ loads
    if clip:
        est = np.minimum(est, 1.0)
    return est


def uniform_superposition(loads: np.ndarray, topo: Topology) -> np.ndarray:
    """Expected busy fraction when neighbor transmissions overlap independently."""
    loads = np.asarray(loads, dtype=np.float64)
    if loads.shape != (topo.n,):
        raise ValueError(f"loads shape {loads.shape} does not match topology n={topo.n}")
    if np.any(loads < 0.0) or np.any(loads > 1.0):
        raise ValueError("loads must lie in [0, 1]")
    # log-free product per node over its neighborhood
    one_minus = 1.0 - loads
    est = np.empty(topo.n)
    for a in range(topo.n):
        est[a] = 1.0 - np.prod(one_minus[topo.adjacency[a]])
    return est


def monte_carlo_superposition(neighbor_loads: Sequence[float], slots: int, seed: int) -> float:
    """Fraction of time slots occupied by at least one neighbor.

    Each neighbor occupies each slot independently with probability equal to
    its load. Deterministic given the seed; converges to the superposition
    formula as slots grows.
    """
    if slots < 1:
        raise ValueError(f"slots must be >= 1, got {slots}")
    loads = np.asarray(list(neighbor_loads), dtype=np.float64)
    if loads.size == 0:
        return 0.0
    if np.any(loads < 0.0) or np.any(loads > 1.0):
        raise ValueError("loads must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    free = np.ones(slots, dtype=bool)
    for load in loads:
        free &= rng.random(slots) >= load
    return float(1.0 - free.mean())


def threshold_sweep(samples: Sequence[TelemetrySample],
                    thresholds: Sequence[float] = DEFAULT_SWEEP_THRESHOLDS_DBM,
                    estimator: Estimator | None = None) -> list[dict]:
    """Signed estimation-error percentiles per sensing threshold.

    For each threshold the adjacency is re-derived, the estimator is run on
    every sample, and the per-node signed errors (estimate - measured) are
    pooled; each row reports P5/P25/P50/P75/P95 of that pool.
    """
    if len(samples) == 0:
        raise ValueError("empty samples")
    if estimator is None:
        estimator = simple_sum_estimator
    rows = []
    sym = [symmetrize_rssi(s.rssi) for s in samples]
    for thr in thresholds:
        errors = []
        for s, rs in zip(samples, sym):
            topo = derive_adjacency(rs, thr)
            est = estimator(s, topo)
            errors.append(est - s.interference)
        pooled = np.concatenate(errors)
        pcts = np.percentile(pooled, ERROR_PERCENTILES)
        rows.append({
            "threshold_dbm": float(thr),
            "p5": pcts[0], "p25": pcts[1], "p50": pcts[2], "p75": pcts[3], "p95": pcts[4],
            "node_count": int(pooled.size),
        })
    return rows


def simple_sum_estimator(sample: TelemetrySample, topo: Topology) -> np.ndarray:
    return simple_sum(load_from_telemetry(sample), topo)


def uniform_superposition_estimator(sample: TelemetrySample, topo: Topology) -> np.ndarray:
    return uniform_superposition(load_from_telemetry(sample), topo)


ESTIMATORS: dict[str, Estimator] = {
    "simple-sum": simple_sum_estimator,
    "uniform-superposition": uniform_superposition_estimator,
}
