from datetime import datetime, timezone

import numpy as np
import pytest
from scipy import stats as scipy_stats

from airtime.experiments import (HeatmapResult, ModelSpec, kernel_ablation,
                                 pearson_heatmap, pearson_p_value, pearson_r,
                                 run_k_sweep, run_single_experiment, transfer_evaluate)
from airtime.models import GcnModel
from airtime.synth import (SynthConfig, build_k_topology_experiment, gen_loads,
                           make_ablation_benchmark)
from airtime.telemetry import Dataset, LabeledSample, TelemetrySample, Topology
from airtime.training import TrainConfig, evaluate
from conftest import random_topology

TINY_TRAIN = TrainConfig(epochs=3, patience=100, seed=0)


def _tiny_synth(**kw):
    base = dict(n=5, p=0.4, k=2, train_size=30, val_size=12, seed=0)
    base.update(kw)
    return SynthConfig(**base)


# --- pearson ------------------------------------------------------------------

def test_pearson_passthrough_is_one():
    x = np.array([0.1, 0.5, 0.3, 0.9])
    assert pearson_r(x, x) == pytest.approx(1.0)


def test_pearson_negated_is_minus_one():
    x = np.array([0.1, 0.5, 0.3, 0.9])
    assert pearson_r(x, -x) == pytest.approx(-1.0)


def test_pearson_matches_scipy_hand_cell():
    x = np.array([0.12, 0.45, 0.23, 0.91])
    y = np.array([0.2, 0.4, 0.1, 0.8])
    r_ref, p_ref = scipy_stats.pearsonr(x, y)
    assert pearson_r(x, y) == pytest.approx(r_ref, abs=1e-12)
    assert pearson_p_value(pearson_r(x, y), 4) == pytest.approx(p_ref, abs=1e-12)


def test_pearson_zero_variance_is_nan():
    assert np.isnan(pearson_r(np.ones(4), np.array([1.0, 2.0, 3.0, 4.0])))


def test_pearson_affine_invariance():
    rng = np.random.default_rng(0)
    x = rng.random(10)
    y = rng.random(10)
    base = pearson_r(x, y)
    assert pearson_r(x, 3.5 * y + 1.2) == pytest.approx(base, abs=1e-12)


def _telemetry(hour, interference, rssi_val=-70.0, n=2):
    rssi = np.full((n, n), -100.0)
    rssi[0, 1] = rssi[1, 0] = rssi_val
    return TelemetrySample(network_id="net",
                           timestamp=datetime(2022, 3, 1, hour, 0, tzinfo=timezone.utc),
                           tx_time=np.full(n, 0.2), rx_time=np.zeros(n),
                           interference=np.asarray(interference, float), rssi=rssi)


def test_heatmap_passthrough_r_one_where_defined():
    samples = [_telemetry(10, [0.1 * i, 0.05 * i]) for i in range(1, 5)]
    result = pearson_heatmap(samples, lambda s, t: s.interference)
    assert result.r[0, 10] == pytest.approx(1.0)
    assert result.p[0, 10] == pytest.approx(0.0, abs=1e-9)
    assert result.counts[0, 10] == 4


def test_heatmap_negated_r_minus_one():
    samples = [_telemetry(7, [0.1 * i, 0.0]) for i in range(1, 5)]
    result = pearson_heatmap(samples, lambda s, t: -s.interference)
    assert result.r[0, 7] == pytest.approx(-1.0)


def test_heatmap_undefined_cells_are_nan():
    # constant interference -> zero variance; other hours -> too few samples
    samples = [_telemetry(3, [0.5, 0.1 * i]) for i in range(1, 5)] + [_telemetry(4, [0.1, 0.1])]
    result = pearson_heatmap(samples, lambda s, t: s.interference)
    assert np.isnan(result.r[0, 3])  # zero variance
    assert np.isnan(result.r[0, 4])  # single sample
    assert np.isnan(result.r[0, 5])  # empty cell


def test_heatmap_estimator_sees_derived_topology():
    samples = [_telemetry(9, [0.1 * i, 0.2]) for i in range(1, 5)]
    seen = []
    def estimator(s, topo):
        seen.append(topo.adjacency[0, 1])
        return s.interference
    pearson_heatmap(samples, estimator)
    assert all(seen)  # -70 dBm clears the -82 default


# --- transfer -------------------------------------------------------------------

def _trained_tiny_gcn(node_ids=False, max_n=5):
    config = _tiny_synth(node_ids=node_ids)
    train_set, val_set, _ = build_k_topology_experiment(config)
    model = GcnModel(max_n=max_n, node_ids=node_ids, rng=np.random.default_rng(0))
    from airtime.training import train as train_fn
    train_fn(model, train_set, val_set, TINY_TRAIN)
    return model, val_set


def test_transfer_same_network_matches_evaluate():
    model, val_set = _trained_tiny_gcn()
    direct, direct_errs = evaluate(model, val_set, high_load_only=True)
    via_transfer, transfer_errs = transfer_evaluate(model, val_set, high_load_only=True)
    assert direct.mae == pytest.approx(via_transfer.mae, abs=1e-15)
    assert np.allclose(direct_errs, transfer_errs)


def test_transfer_capacity_check():
    model, _ = _trained_tiny_gcn(max_n=5)
    rng = np.random.default_rng(1)
    big = LabeledSample(features=gen_loads(9, rng).reshape(-1, 1),
                        topology=random_topology(9, 0.3, rng), labels=np.ones(9))
    with pytest.raises(ValueError, match="capacity"):
        transfer_evaluate(model, [big])


def test_transfer_accepts_84_nodes_under_128():
    rng = np.random.default_rng(2)
    model = GcnModel(max_n=128, rng=rng)
    sample = LabeledSample(features=gen_loads(84, rng).reshape(-1, 1),
                           topology=random_topology(84, 0.05, rng),
                           labels=np.full(84, 0.5))
    report, _ = transfer_evaluate(model, [sample])
    assert report.node_count == 84


def test_transfer_zeroes_foreign_node_ids():
    model, _ = _trained_tiny_gcn(node_ids=True)
    rng = np.random.default_rng(3)
    foreign = LabeledSample(features=gen_loads(4, rng).reshape(-1, 1),
                            topology=random_topology(4, 0.5, rng),
                            labels=np.full(4, 0.5))
    report, errors = transfer_evaluate(model, [foreign])
    assert errors.size == 4  # runs despite the model expecting an ID block


def test_size_generalization_within_factor_two():
    # trained on n=10 graphs, evaluated on n=20 graphs of the same family
    config = SynthConfig(n=10, p=0.2, k=8, train_size=800, val_size=200, seed=4)
    train_set, val_set, _ = build_k_topology_experiment(config)
    model = GcnModel(max_n=20, rng=np.random.default_rng(4))
    from airtime.training import train as train_fn
    train_fn(model, train_set, val_set, TrainConfig(epochs=30, patience=30, seed=4))
    in_dist, _ = evaluate(model, val_set, high_load_only=True)
    big_config = SynthConfig(n=20, p=0.2, k=1, train_size=1, val_size=200, seed=5)
    _, big_val, _ = build_k_topology_experiment(big_config)
    transfer, _ = transfer_evaluate(model, big_val, high_load_only=True)
    assert transfer.mse <= 2.0 * in_dist.mse


# --- sweeps and ablation -----------------------------------------------------------

def test_run_k_sweep_row_structure_and_determinism():
    spec = ModelSpec(kind="gcn")
    kwargs = dict(k_values=[1, 2], repetitions=2, synth_config=_tiny_synth(),
                  train_config=TINY_TRAIN, seed=0)
    rows_a = run_k_sweep(spec, **kwargs)
    rows_b = run_k_sweep(spec, **kwargs)
    assert [r.k for r in rows_a] == [1, 2]
    for ra, rb in zip(rows_a, rows_b):
        assert ra == rb
        assert ra.repetitions == 2
        assert len(ra.val_mses) == 2
        assert ra.mean_val_mse == pytest.approx(float(np.mean(ra.val_mses)))


def test_constant_zero_model_val_mse_is_mean_squared_label():
    config = _tiny_synth(seed=9)
    train_set, val_set, _ = build_k_topology_experiment(config)
    model = GcnModel(max_n=5, rng=np.random.default_rng(0))
    for w in model.weights:
        w.data[:] = 0.0
    from airtime.training import _masked_val_loss
    from airtime.models import pad_dataset
    prep = model.prepare(pad_dataset(list(val_set), 5))
    loss = _masked_val_loss(model, prep)
    expect = float(np.mean([s.labels ** 2 for s in val_set]))
    assert loss == pytest.approx(expect, abs=1e-12)


def test_kernel_ablation_returns_reproducible_nonneg_pair():
    config = _tiny_synth(seed=2)
    train_set, val_set = make_ablation_benchmark(config)
    a = kernel_ablation(train_set, val_set, TINY_TRAIN, max_n=5)
    b = kernel_ablation(train_set, val_set, TINY_TRAIN, max_n=5)
    assert a == b
    assert a[0] >= 0.0 and a[1] >= 0.0


def test_kernel_ablation_requires_rssi():
    config = _tiny_synth()
    train_set, val_set, _ = build_k_topology_experiment(config)
    with pytest.raises(ValueError, match="RSSI"):
        kernel_ablation(train_set, val_set, TINY_TRAIN)


def test_run_single_experiment_deterministic():
    spec = ModelSpec(kind="gcn")
    a = run_single_experiment(spec, _tiny_synth(), TINY_TRAIN)
    b = run_single_experiment(spec, _tiny_synth(), TINY_TRAIN)
    assert a.val_losses == b.val_losses
