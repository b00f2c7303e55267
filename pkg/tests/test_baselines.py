from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airtime.baselines import (DEFAULT_SWEEP_THRESHOLDS_DBM, monte_carlo_superposition,
                               simple_sum, threshold_sweep, uniform_superposition)
from airtime.telemetry import TelemetrySample, Topology
from conftest import random_topology


def topo_from_edges(n, edges):
    adj = np.zeros((n, n), dtype=bool)
    for a, b in edges:
        adj[a, b] = adj[b, a] = True
    return Topology(adjacency=adj)


# --- simple sum -------------------------------------------------------------

def test_simple_sum_isolated_node_is_zero():
    est = simple_sum(np.array([0.9, 0.9]), topo_from_edges(2, []))
    assert np.array_equal(est, [0.0, 0.0])


def test_simple_sum_hand_case():
    # node 0 neighbors {1, 2} with loads 0.2, 0.3
    topo = topo_from_edges(3, [(0, 1), (0, 2)])
    est = simple_sum(np.array([0.5, 0.2, 0.3]), topo)
    assert est[0] == pytest.approx(0.5)


def test_simple_sum_clipping():
    topo = topo_from_edges(3, [(0, 1), (0, 2)])
    loads = np.array([0.0, 0.8, 0.8])
    assert simple_sum(loads, topo, clip=True)[0] == 1.0
    assert simple_sum(loads, topo, clip=False)[0] == pytest.approx(1.6)


def test_simple_sum_dimension_mismatch():
    with pytest.raises(ValueError):
        simple_sum(np.array([0.1, 0.2]), topo_from_edges(3, []))


# --- uniform superposition -----------------------------------------------------

def test_superposition_no_neighbors():
    assert uniform_superposition(np.array([0.9]), topo_from_edges(1, []))[0] == 0.0


def test_superposition_single_neighbor():
    topo = topo_from_edges(2, [(0, 1)])
    assert uniform_superposition(np.array([0.0, 0.3]), topo)[0] == pytest.approx(0.3)


def test_superposition_hand_case():
    topo = topo_from_edges(3, [(0, 1), (0, 2)])
    est = uniform_superposition(np.array([0.0, 0.5, 0.5]), topo)
    assert est[0] == pytest.approx(0.75)


def test_superposition_dimension_mismatch():
    with pytest.raises(ValueError):
        uniform_superposition(np.array([0.1]), topo_from_edges(2, []))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 100_000))
def test_superposition_never_exceeds_simple_sum(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    topo = random_topology(n, 0.4, rng)
    loads = rng.random(n)
    us = uniform_superposition(loads, topo)
    ss = simple_sum(loads, topo, clip=False)
    assert np.all(us <= ss + 1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000))
def test_estimators_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    n = 6
    topo = random_topology(n, 0.4, rng)
    loads = rng.random(n)
    perm = rng.permutation(n)
    permuted_topo = Topology(adjacency=topo.adjacency[np.ix_(perm, perm)])
    for est in (lambda l, t: simple_sum(l, t, clip=False), uniform_superposition):
        direct = est(loads, topo)[perm]
        relabeled = est(loads[perm], permuted_topo)
        assert np.allclose(direct, relabeled, atol=1e-12)


def test_zero_loads_give_zero_estimates(rng):
    topo = random_topology(6, 0.5, rng)
    zeros = np.zeros(6)
    assert np.array_equal(simple_sum(zeros, topo), zeros)
    assert np.array_equal(uniform_superposition(zeros, topo), zeros)


# --- Monte Carlo slot oracle ------------------------------------------------------

def test_monte_carlo_full_load_always_busy():
    assert monte_carlo_superposition([1.0], slots=1000, seed=0) == 1.0


def test_monte_carlo_empty_neighborhood():
    assert monte_carlo_superposition([], slots=1000, seed=0) == 0.0


def test_monte_carlo_matches_formula_hand_case():
    mc = monte_carlo_superposition([0.5, 0.5], slots=1_000_000, seed=42)
    assert abs(mc - 0.75) < 0.005


def test_monte_carlo_deterministic_given_seed():
    a = monte_carlo_superposition([0.3, 0.6], slots=10_000, seed=7)
    b = monte_carlo_superposition([0.3, 0.6], slots=10_000, seed=7)
    assert a == b


def test_monte_carlo_rejects_bad_inputs():
    with pytest.raises(ValueError):
        monte_carlo_superposition([0.5], slots=0, seed=0)
    with pytest.raises(ValueError):
        monte_carlo_superposition([1.5], slots=10, seed=0)


# --- threshold sweep -----------------------------------------------------------

TS = datetime(2022, 3, 1, 10, 0, tzinfo=timezone.utc)


def test_default_sweep_covers_minus100_to_minus62_in_20_steps():
    assert len(DEFAULT_SWEEP_THRESHOLDS_DBM) == 20
    assert DEFAULT_SWEEP_THRESHOLDS_DBM[0] == -100.0
    assert DEFAULT_SWEEP_THRESHOLDS_DBM[-1] == -62.0


def _three_node_sample():
    # symmetric rssi: (0,1)=-70 neighbors at -82, (0,2)=-90 not, (1,2)=-80 neighbors
    rssi = np.full((3, 3), -100.0)
    rssi[0, 1] = rssi[1, 0] = -70.0
    rssi[0, 2] = rssi[2, 0] = -90.0
    rssi[1, 2] = rssi[2, 1] = -80.0
    return TelemetrySample(network_id="net", timestamp=TS,
                           tx_time=np.array([0.2, 0.4, 0.6]),
                           rx_time=np.zeros(3),
                           interference=np.array([0.3, 0.5, 0.1]),
                           rssi=rssi)


def test_sweep_groundtruth_passthrough_gives_zero_percentiles():
    rows = threshold_sweep([_three_node_sample()],
                           estimator=lambda s, t: s.interference)
    for row in rows:
        for key in ("p5", "p25", "p50", "p75", "p95"):
            assert row[key] == 0.0


def test_sweep_hand_computed_three_node_percentiles():
    # at -82 dBm: neighbors 0-1 and 1-2; loads [0.2, 0.4, 0.6]
    # simple sum = [0.4, 0.8, 0.4]; measured = [0.3, 0.5, 0.1]
    # signed errors sorted: [0.1, 0.3, 0.3]
    # linear-interpolation percentiles (independent oracle): see positions q/100*(m-1)
    rows = threshold_sweep([_three_node_sample()], thresholds=[-82.0])
    row = rows[0]
    assert row["p5"] == pytest.approx(0.12)
    assert row["p25"] == pytest.approx(0.2)
    assert row["p50"] == pytest.approx(0.3)
    assert row["p75"] == pytest.approx(0.3)
    assert row["p95"] == pytest.approx(0.3)
    assert row["node_count"] == 3


def test_sweep_rejects_empty_samples():
    with pytest.raises(ValueError):
        threshold_sweep([])
