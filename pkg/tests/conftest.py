import numpy as np
import pytest

from airtime.telemetry import Topology


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_topology(n: int, p: float, rng: np.random.Generator) -> Topology:
    iu = np.triu_indices(n, k=1)
    adj = np.zeros((n, n), dtype=bool)
    adj[iu] = rng.random(len(iu[0])) < p
    adj |= adj.T
    return Topology(adjacency=adj)


def random_symmetric_rssi(n: int, rng: np.random.Generator) -> np.ndarray:
    vals = rng.uniform(-100.0, 0.0, size=(n, n))
    out = np.minimum(vals, vals.T)
    np.fill_diagonal(out, -100.0)
    return out
