import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airtime.baselines import simple_sum
from airtime.synth import (SynthConfig, augment_node_ids, build_k_topology_experiment,
                           gen_erdos_renyi, gen_loads, jittered_rssi, label_simple_sum,
                           label_single_failure, make_ablation_benchmark)
from airtime.telemetry import Topology
from conftest import random_topology


def topo_from_edges(n, edges):
    adj = np.zeros((n, n), dtype=bool)
    for a, b in edges:
        adj[a, b] = adj[b, a] = True
    return Topology(adjacency=adj)


# --- graph generation ---------------------------------------------------------

def test_er_p0_empty_and_p1_complete():
    rng = np.random.default_rng(0)
    assert gen_erdos_renyi(5, 0.0, rng).edge_count() == 0
    assert gen_erdos_renyi(5, 1.0, rng).edge_count() == 10


def test_er_mean_edge_count_matches_p_choose_2():
    rng = np.random.default_rng(123)
    counts = [gen_erdos_renyi(10, 0.2, rng).edge_count() for _ in range(10_000)]
    assert abs(np.mean(counts) - 9.0) < 0.3  # p * C(10,2) = 9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_er_symmetric_no_self_loops(seed):
    topo = gen_erdos_renyi(8, 0.3, np.random.default_rng(seed))
    assert np.array_equal(topo.adjacency, topo.adjacency.T)
    assert not np.any(np.diag(topo.adjacency))


# --- loads ---------------------------------------------------------------------

def test_loads_stay_in_stated_range():
    loads = gen_loads(10_000, np.random.default_rng(0))
    assert loads.min() >= 0.01
    assert loads.max() <= 1.0


def test_loads_empirical_mean_matches_midpoint():
    loads = gen_loads(100_000, np.random.default_rng(1))
    assert abs(loads.mean() - 0.505) < 0.01


def test_loads_deterministic_given_seed():
    a = gen_loads(50, np.random.default_rng(9))
    b = gen_loads(50, np.random.default_rng(9))
    assert np.array_equal(a, b)


# --- labels ---------------------------------------------------------------------

def test_simple_sum_labels_isolated_node():
    assert label_simple_sum(np.array([0.7]), topo_from_edges(1, []))[0] == 0.0


def test_simple_sum_labels_path_hand_case():
    topo = topo_from_edges(3, [(0, 1), (1, 2)])
    labels = label_simple_sum(np.array([0.1, 0.2, 0.3]), topo)
    assert np.allclose(labels, [0.2, 0.4, 0.2])


def test_simple_sum_labels_two_clique_hand_case():
    labels = label_simple_sum(np.array([0.4, 0.7]), topo_from_edges(2, [(0, 1)]))
    assert np.allclose(labels, [0.7, 0.4])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_labels_equal_unclipped_baseline_simple_sum(seed):
    rng = np.random.default_rng(seed)
    topo = random_topology(7, 0.4, rng)
    loads = gen_loads(7, rng)
    assert np.array_equal(label_simple_sum(loads, topo), simple_sum(loads, topo, clip=False))


def test_single_failure_path_hand_case():
    topo = topo_from_edges(3, [(0, 1), (1, 2)])
    labels = label_single_failure(np.array([0.1, 0.2, 0.3]), topo, failure_index=2)
    assert np.allclose(labels, [0.2, 0.4, 0.0])


def test_single_failure_isolated_failure_node_matches_simple_sum():
    topo = topo_from_edges(3, [(0, 1)])
    loads = np.array([0.1, 0.2, 0.3])
    assert np.allclose(label_single_failure(loads, topo, 2), label_simple_sum(loads, topo))


def test_single_failure_two_clique_hand_case():
    labels = label_single_failure(np.array([0.4, 0.7]), topo_from_edges(2, [(0, 1)]), 1)
    assert np.allclose(labels, [0.7, 0.0])


# --- node-ID augmentation ---------------------------------------------------------

def test_augment_one_hot_rows():
    out = augment_node_ids(np.array([[0.1], [0.2], [0.3]]), max_n=3)
    assert np.allclose(out[1], [0.2, 0.0, 1.0, 0.0])


def test_augment_single_node():
    out = augment_node_ids(np.array([[0.5]]), max_n=1)
    assert np.allclose(out, [[0.5, 1.0]])


def test_augment_feature_width_is_one_plus_max_n():
    out = augment_node_ids(np.ones((4, 1)), max_n=7)
    assert out.shape == (4, 8)
    assert np.all(out[:, 5:] == 0.0)  # columns beyond n-1 stay zero


def test_augment_rejects_oversized_network():
    with pytest.raises(ValueError):
        augment_node_ids(np.ones((5, 1)), max_n=3)


# --- experiment construction --------------------------------------------------------

def _small_config(**kw):
    base = dict(n=6, p=0.3, k=3, train_size=40, val_size=15, seed=5)
    base.update(kw)
    return SynthConfig(**base)


def test_k1_training_shares_one_adjacency():
    train, _, fixed = build_k_topology_experiment(_small_config(k=1))
    assert len(fixed) == 1
    for s in train:
        assert np.array_equal(s.topology.adjacency, fixed[0].adjacency)


def test_experiment_sizes_match_config():
    config = SynthConfig(n=10, p=0.2, k=4, train_size=6000, val_size=2000, seed=0)
    train, val, _ = build_k_topology_experiment(config)
    assert (len(train), len(val)) == (6000, 2000)


def test_training_uses_at_most_k_distinct_topologies():
    train, _, _ = build_k_topology_experiment(_small_config(k=3))
    distinct = {s.topology.adjacency.tobytes() for s in train}
    assert len(distinct) <= 3


def test_generation_deterministic_given_config():
    a_train, a_val, _ = build_k_topology_experiment(_small_config())
    b_train, b_val, _ = build_k_topology_experiment(_small_config())
    for xs, ys in ((a_train, b_train), (a_val, b_val)):
        assert len(xs) == len(ys)
        for x, y in zip(xs, ys):
            assert np.array_equal(x.features, y.features)
            assert np.array_equal(x.labels, y.labels)
            assert np.array_equal(x.topology.adjacency, y.topology.adjacency)


def test_single_failure_datasets_zero_the_failure_node():
    config = _small_config(label_kind="single-failure", failure_index=2)
    train, val, _ = build_k_topology_experiment(config)
    for s in list(train) + list(val):
        assert s.labels[2] == 0.0


def test_node_ids_flag_widens_features():
    train, _, _ = build_k_topology_experiment(_small_config(node_ids=True))
    assert train[0].features.shape == (6, 7)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(p=1.2)
    with pytest.raises(ValueError):
        SynthConfig(k=0)
    with pytest.raises(ValueError):
        SynthConfig(label_kind="single-failure", failure_index=10, n=5)


# --- ablation benchmark ----------------------------------------------------------

def test_jittered_rssi_separates_edges_at_threshold():
    rng = np.random.default_rng(3)
    topo = random_topology(8, 0.4, rng)
    rssi = jittered_rssi(topo, rng, threshold=-82.0, jitter=10.0)
    assert np.array_equal(rssi, rssi.T)
    iu = np.triu_indices(8, k=1)
    edges = topo.adjacency[iu]
    assert np.all(rssi[iu][edges] >= -82.0)
    assert np.all(rssi[iu][~edges] <= -82.0)
    assert np.all(rssi[iu][edges] <= -72.0)
    assert np.all(rssi[iu][~edges] >= -92.0)


def test_ablation_benchmark_carries_rssi_and_true_labels():
    train, val = make_ablation_benchmark(_small_config())
    assert len(train) == 40 and len(val) == 15
    for s in list(train) + list(val):
        assert s.rssi is not None
        assert np.allclose(s.labels, label_simple_sum(s.loads, s.topology))
