"""The three neural estimators and the graph-kernel constructor.

The GCN propagates node features through k kernels per layer: the identity,
the normalized RSSI-weight matrix, and optionally the normalized adjacency.
Keeping raw RSSI as its own kernel lets the model learn the sensing
threshold instead of inheriting a hard -82 dBm cut. The MLP and BiLSTM are
fixed-width baselines over padded inputs; the GCN is size-agnostic apart
from the optional one-hot node-ID feature block.

All models share a batch protocol: ``prepare`` turns a list of equally-sized
(padded) samples into dense arrays once, ``forward_prepared`` runs a batch by
index, and ``predict`` returns per-node estimates with pad nodes stripped by
the caller via masks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .telemetry import LabeledSample, Topology

RSSI_WEIGHT_FLOOR_DBM = -100.0
RSSI_WEIGHT_CEIL_DBM = -40.0
SURROGATE_EDGE_DBM = -70.0
KERNEL_SCALE = 32.0
GCN_HIDDEN = 100
GCN_CONV_LAYERS = 4
MLP_HIDDEN = 3000
LSTM_UNITS = 40
LSTM_LAYERS = 3
DROPOUT_RATE = 0.5
DEFAULT_MAX_N = 128


@dataclass(frozen=True)
class KernelSet:
    """Ordered propagation matrices [T1, T2, (T3)]; T1 is always the identity."""

    kernels: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.kernels) not in (2, 3):
            raise ValueError(f"kernel count must be 2 or 3, got {len(self.kernels)}")
        n = self.kernels[0].shape[0]
        if not np.array_equal(self.kernels[0], np.eye(n)):
            raise ValueError("first kernel must be the identity")
        for t in self.kernels:
            if t.shape != (n, n) or not np.isfinite(t).all():
                raise ValueError("kernels must be finite square matrices of equal size")

    @property
    def k(self) -> int:
        return len(self.kernels)

    @property
    def n(self) -> int:
        return self.kernels[0].shape[0]

    def stacked(self) -> np.ndarray:
        return np.stack(self.kernels)


def dbm_to_weight(rssi: np.ndarray) -> np.ndarray:
    """Affine [-100, -40] dBm -> [0, 1] propagation weight, clamped; stronger signal, larger weight."""
    span = RSSI_WEIGHT_CEIL_DBM - RSSI_WEIGHT_FLOOR_DBM
    return np.clip((np.asarray(rssi, dtype=np.float64) - RSSI_WEIGHT_FLOOR_DBM) / span, 0.0, 1.0)


def build_kernels(adjacency: Topology, rssi: np.ndarray | None = None,
                  include_adjacency_kernel: bool = True,
                  scale: float = KERNEL_SCALE) -> KernelSet:
    """Kernels [T1=I, T2=normalized RSSI weights, T3=normalized adjacency (optional)].

    Without an RSSI matrix, T2 falls back to a surrogate built from the
    adjacency (edges at -70 dBm, non-edges at the -100 dBm sentinel). Self
    connections get weight 1, then T2/T3 are normalized by the fixed scalar
    ``scale``. A sample-independent normalizer keeps every kernel affine in
    the underlying matrix with shared constants, so neighbor aggregates stay
    exactly expressible by shared weights, and appending isolated pad nodes
    cannot change real-node entries.
    """
    n = adjacency.n
    if rssi is None:
        rssi = np.where(adjacency.adjacency, SURROGATE_EDGE_DBM, RSSI_WEIGHT_FLOOR_DBM)
    else:
        rssi = np.asarray(rssi, dtype=np.float64)
        if rssi.shape != (n, n):
            raise ValueError(f"rssi shape {rssi.shape} does not match topology n={n}")
        if not np.array_equal(rssi, rssi.T):
            raise ValueError("rssi must be symmetric (symmetrize it first)")
    if scale <= 0:
        raise ValueError(f"kernel scale must be positive, got {scale}")
    t1 = np.eye(n)
    m2 = dbm_to_weight(rssi)
    np.fill_diagonal(m2, 1.0)
    kernels = [t1, m2 / scale]
    if include_adjacency_kernel:
        m3 = adjacency.adjacency.astype(np.float64)
        np.fill_diagonal(m3, 1.0)
        kernels.append(m3 / scale)
    return KernelSet(kernels=tuple(kernels))


def glorot(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def pad_inputs(sample: LabeledSample, max_n: int) -> LabeledSample:
    """Zero-pad a sample to max_n nodes, with a mask so pad nodes never enter losses.

    Pad nodes are isolated, zero-load, and featureless; a one-hot ID block, if
    present, is rebuilt at width max_n with all-zero rows for pad nodes.
    """
    n = sample.n
    if n > max_n:
        raise ValueError(f"network exceeds model capacity: n={n} > max_n={max_n}")
    if n == max_n:
        return sample
    id_width = sample.features.shape[1] - 1
    if id_width > max_n:
        raise ValueError(f"node-ID block width {id_width} exceeds max_n={max_n}")
    d = 1 + max_n if id_width > 0 else 1
    features = np.zeros((max_n, d))
    features[:n, 0] = sample.features[:, 0]
    if id_width > 0:
        features[:n, 1:1 + id_width] = sample.features[:, 1:]
    adj = np.zeros((max_n, max_n), dtype=bool)
    adj[:n, :n] = sample.topology.adjacency
    labels = np.zeros(max_n)
    labels[:n] = sample.labels
    mask = np.zeros(max_n)
    mask[:n] = sample.real_mask
    rssi = None
    if sample.rssi is not None:
        rssi = np.full((max_n, max_n), RSSI_WEIGHT_FLOOR_DBM)
        rssi[:n, :n] = sample.rssi
    return LabeledSample(features=features, topology=Topology(adjacency=adj),
                         labels=labels, rssi=rssi, mask=mask)


def pad_dataset(samples: Sequence[LabeledSample], max_n: int) -> list[LabeledSample]:
    return [pad_inputs(s, max_n) for s in samples]


def strip_node_ids(sample: LabeledSample) -> LabeledSample:
    """Zero a sample's ID block: node identities are training-network-specific."""
    if sample.features.shape[1] == 1:
        return sample
    features = sample.features.copy()
    features[:, 1:] = 0.0
    return replace(sample, features=features)


# ---------------------------------------------------------------------------
# GCN


class GcnModel:
    """Multi-kernel graph-convolutional estimator.

    Four hidden graph-conv layers of 100 units with ReLU, then a linear
    graph-conv output to one value per node. Layer l concatenates T_j @ H
    over kernels j and multiplies by W(l) of shape (k*d_l, d_{l+1}); there
    are no biases and no dropout.
    """

    kind = "gcn"

    def __init__(self, max_n: int = DEFAULT_MAX_N, node_ids: bool = False,
                 include_adjacency_kernel: bool = False,
                 hidden: int = GCN_HIDDEN, conv_layers: int = GCN_CONV_LAYERS,
                 kernel_scale: float = KERNEL_SCALE,
                 rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.max_n = max_n
        self.node_ids = node_ids
        self.include_adjacency_kernel = include_adjacency_kernel
        self.kernel_count = 3 if include_adjacency_kernel else 2
        self.hidden = hidden
        self.conv_layers = conv_layers
        self.kernel_scale = kernel_scale
        d0 = 1 + max_n if node_ids else 1
        self.dims = [d0] + [hidden] * conv_layers + [1]
        self.weights = [
            Tensor(glorot(self.kernel_count * self.dims[i], self.dims[i + 1], rng), requires_grad=True)
            for i in range(len(self.dims) - 1)
        ]

    def parameters(self) -> list[Tensor]:
        return list(self.weights)

    def forward_stack(self, kernels: np.ndarray, features, batch: int,
                      training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Forward a stacked batch: kernels (k, batch, n, n), features (batch*n, d0)."""
        if kernels.shape[0] != self.kernel_count:
            raise ValueError(f"model expects {self.kernel_count} kernels, got {kernels.shape[0]}")
        h = features if isinstance(features, Tensor) else Tensor(features)
        if h.cols != self.dims[0]:
            raise ValueError(f"feature width {h.cols} does not match d0={self.dims[0]}")
        for w in self.weights[:-1]:
            mixed = ad.multi_kernel_apply(kernels, h, batch)
            h = ad.relu(ad.matmul(mixed, w))
        mixed = ad.multi_kernel_apply(kernels, h, batch)
        return ad.matmul(mixed, self.weights[-1])

    # batch protocol -------------------------------------------------------

    def prepare(self, samples: Sequence[LabeledSample]) -> dict:
        n = samples[0].n
        d0 = self.dims[0]
        feats = np.zeros((len(samples), n, d0))
        kernels = np.zeros((len(samples), self.kernel_count, n, n))
        labels = np.zeros((len(samples), n))
        mask = np.zeros((len(samples), n))
        for i, s in enumerate(samples):
            if s.n != n:
                raise ValueError("all samples in a batch context must share node count (pad first)")
            if s.features.shape[1] != d0:
                raise ValueError(f"sample feature width {s.features.shape[1]} != model d0 {d0}")
            feats[i] = s.features
            ks = build_kernels(s.topology, s.rssi, self.include_adjacency_kernel,
                               scale=self.kernel_scale)
            kernels[i] = ks.stacked()
            labels[i] = s.labels
            mask[i] = s.real_mask
        return {"n": n, "feats": feats, "kernels": kernels, "labels": labels, "mask": mask}

    def forward_prepared(self, prep: dict, idx: np.ndarray, training: bool = False,
                         rng: np.random.Generator | None = None) -> Tensor:
        b = len(idx)
        n = prep["n"]
        feats = prep["feats"][idx].reshape(b * n, self.dims[0])
        kernels = prep["kernels"][idx].transpose(1, 0, 2, 3).copy()
        return self.forward_stack(kernels, feats, b, training=training, rng=rng)

    def loss_pair(self, prep: dict, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        b = len(idx)
        n = prep["n"]
        return prep["labels"][idx].reshape(b * n, 1), prep["mask"][idx].reshape(b * n, 1)

    def reshape_predictions(self, out: np.ndarray, b: int, n: int) -> np.ndarray:
        return out.reshape(b, n)

    def state(self) -> dict:
        return {
            "arch": {
                "max_n": self.max_n, "node_ids": self.node_ids,
                "include_adjacency_kernel": self.include_adjacency_kernel,
                "hidden": self.hidden, "conv_layers": self.conv_layers,
                "kernel_scale": self.kernel_scale,
            },
            "weights": {f"W{i}": w.data for i, w in enumerate(self.weights)},
        }

    @classmethod
    def from_state(cls, arch: dict, weights: dict) -> "GcnModel":
        model = cls(max_n=arch["max_n"], node_ids=arch["node_ids"],
                    include_adjacency_kernel=arch["include_adjacency_kernel"],
                    hidden=arch["hidden"], conv_layers=arch["conv_layers"],
                    kernel_scale=arch.get("kernel_scale", KERNEL_SCALE))
        for i, w in enumerate(model.weights):
            w.data = np.array(weights[f"W{i}"], dtype=np.float64)
        return model


def gcn_forward(model: GcnModel, kernels: KernelSet, features: np.ndarray) -> np.ndarray:
    """Single-sample forward pass: features (n, d0) -> per-node estimates (n,)."""
    if kernels.k != model.kernel_count:
        raise ValueError(f"kernel count {kernels.k} does not match model ({model.kernel_count})")
    stacked = kernels.stacked()[:, None, :, :]
    with ad.no_grad():
        out = model.forward_stack(stacked, np.asarray(features, dtype=np.float64), batch=1)
    return out.data.reshape(-1)


# ---------------------------------------------------------------------------
# MLP


class MlpModel:
    """Dense baseline over the padded load vector plus flattened adjacency.

    Three hidden blocks of 3000 units with ReLU and dropout(0.5), then a
    linear output of width max_n.
    """

    kind = "mlp"

    def __init__(self, max_n: int = DEFAULT_MAX_N, hidden: int = MLP_HIDDEN,
                 rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.max_n = max_n
        self.hidden = hidden
        self.in_width = max_n + max_n * max_n
        dims = [self.in_width, hidden, hidden, hidden, max_n]
        self.weights = []
        self.biases = []
        for i in range(4):
            self.weights.append(Tensor(glorot(dims[i], dims[i + 1], rng), requires_grad=True))
            self.biases.append(Tensor(np.zeros((1, dims[i + 1])), requires_grad=True))

    def parameters(self) -> list[Tensor]:
        return [t for pair in zip(self.weights, self.biases) for t in pair]

    def forward_batch(self, x, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        h = x if isinstance(x, Tensor) else Tensor(x)
        if h.cols != self.in_width:
            raise ValueError(f"unpadded input: width {h.cols}, expected {self.in_width}")
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = ad.relu(ad.add(ad.matmul(h, w), b))
            h = ad.dropout(h, DROPOUT_RATE, training, rng)
        return ad.add(ad.matmul(h, self.weights[-1]), self.biases[-1])

    def prepare(self, samples: Sequence[LabeledSample]) -> dict:
        n = samples[0].n
        if n != self.max_n:
            raise ValueError(f"unpadded input: samples have n={n}, model max_n={self.max_n}")
        x = np.zeros((len(samples), self.in_width))
        labels = np.zeros((len(samples), n))
        mask = np.zeros((len(samples), n))
        for i, s in enumerate(samples):
            if s.n != n:
                raise ValueError("all samples must be padded to max_n")
            x[i, :n] = s.features[:, 0]
            x[i, n:] = s.topology.adjacency.astype(np.float64).reshape(-1)
            labels[i] = s.labels
            mask[i] = s.real_mask
        return {"n": n, "x": x, "labels": labels, "mask": mask}

    def forward_prepared(self, prep: dict, idx: np.ndarray, training: bool = False,
                         rng: np.random.Generator | None = None) -> Tensor:
        return self.forward_batch(prep["x"][idx], training=training, rng=rng)

    def loss_pair(self, prep: dict, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return prep["labels"][idx], prep["mask"][idx]

    def reshape_predictions(self, out: np.ndarray, b: int, n: int) -> np.ndarray:
        return out

    def state(self) -> dict:
        weights = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases), start=1):
            weights[f"W{i}"] = w.data
            weights[f"b{i}"] = b.data
        return {"arch": {"max_n": self.max_n, "hidden": self.hidden}, "weights": weights}

    @classmethod
    def from_state(cls, arch: dict, weights: dict) -> "MlpModel":
        model = cls(max_n=arch["max_n"], hidden=arch["hidden"])
        for i in range(4):
            model.weights[i].data = np.array(weights[f"W{i + 1}"], dtype=np.float64)
            model.biases[i].data = np.array(weights[f"b{i + 1}"], dtype=np.float64)
        return model


def mlp_forward(model: MlpModel, loads: np.ndarray, adjacency: np.ndarray,
                training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
    """Single-sample forward: padded loads (max_n,) and adjacency (max_n, max_n)."""
    loads = np.asarray(loads, dtype=np.float64)
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if loads.shape != (model.max_n,) or adjacency.shape != (model.max_n, model.max_n):
        raise ValueError("unpadded input: pad loads and adjacency to max_n first")
    x = np.concatenate([loads, adjacency.reshape(-1)]).reshape(1, -1)
    with ad.no_grad():
        out = model.forward_batch(x, training=training, rng=rng)
    return out.data.reshape(-1)


# ---------------------------------------------------------------------------
# BiLSTM


class LstmModel:
    """Recurrent baseline: one timestep per node, bidirectional, 3 layers.

    Timestep i carries all loads plus row i of the adjacency matrix. Each
    layer runs 40 units per direction (concatenated to 80), with dropout(0.5)
    between layers and a shared per-timestep dense head to one value.
    Standard cell: sigmoid input/forget/output gates, tanh candidate and
    output squashing; forget-gate bias starts at 1.
    """

    kind = "lstm"

    def __init__(self, max_n: int = DEFAULT_MAX_N, units: int = LSTM_UNITS,
                 layers: int = LSTM_LAYERS, rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.max_n = max_n
        self.units = units
        self.layers = layers
        self.in_width = 2 * max_n
        self.cells: list[dict[str, Tensor]] = []
        f_in = self.in_width
        for _ in range(layers):
            cell = {}
            for direction in ("fwd", "bwd"):
                bias = np.zeros((1, 4 * units))
                bias[0, units:2 * units] = 1.0
                cell[f"{direction}_W"] = Tensor(glorot(f_in, 4 * units, rng), requires_grad=True)
                cell[f"{direction}_U"] = Tensor(glorot(units, 4 * units, rng), requires_grad=True)
                cell[f"{direction}_b"] = Tensor(bias, requires_grad=True)
            self.cells.append(cell)
            f_in = 2 * units
        self.head_w = Tensor(glorot(2 * units, 1, rng), requires_grad=True)
        self.head_b = Tensor(np.zeros((1, 1)), requires_grad=True)

    def parameters(self) -> list[Tensor]:
        params = []
        for cell in self.cells:
            params.extend(cell.values())
        params.extend([self.head_w, self.head_b])
        return params

    def forward_batch(self, x, batch: int, training: bool = False,
                      rng: np.random.Generator | None = None) -> Tensor:
        """Forward a stacked sequence batch x of shape (batch*max_n, 2*max_n)."""
        h = x if isinstance(x, Tensor) else Tensor(x)
        if h.cols != self.in_width:
            raise ValueError(f"unpadded input: width {h.cols}, expected {self.in_width}")
        for cell in self.cells:
            fwd = ad.lstm_pass(h, cell["fwd_W"], cell["fwd_U"], cell["fwd_b"], batch, reverse=False)
            bwd = ad.lstm_pass(h, cell["bwd_W"], cell["bwd_U"], cell["bwd_b"], batch, reverse=True)
            h = ad.concat_columns(fwd, bwd)
            h = ad.dropout(h, DROPOUT_RATE, training, rng)
        return ad.add(ad.matmul(h, self.head_w), self.head_b)

    def prepare(self, samples: Sequence[LabeledSample]) -> dict:
        n = samples[0].n
        if n != self.max_n:
            raise ValueError(f"unpadded input: samples have n={n}, model max_n={self.max_n}")
        x = np.zeros((len(samples), n, self.in_width))
        labels = np.zeros((len(samples), n))
        mask = np.zeros((len(samples), n))
        for i, s in enumerate(samples):
            if s.n != n:
                raise ValueError("all samples must be padded to max_n")
            adj = s.topology.adjacency.astype(np.float64)
            x[i, :, :n] = s.features[:, 0]
            x[i, :, n:] = adj
            labels[i] = s.labels
            mask[i] = s.real_mask
        return {"n": n, "x": x, "labels": labels, "mask": mask}

    def forward_prepared(self, prep: dict, idx: np.ndarray, training: bool = False,
                         rng: np.random.Generator | None = None) -> Tensor:
        b = len(idx)
        n = prep["n"]
        x = prep["x"][idx].reshape(b * n, self.in_width)
        return self.forward_batch(x, b, training=training, rng=rng)

    def loss_pair(self, prep: dict, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        b = len(idx)
        n = prep["n"]
        return prep["labels"][idx].reshape(b * n, 1), prep["mask"][idx].reshape(b * n, 1)

    def reshape_predictions(self, out: np.ndarray, b: int, n: int) -> np.ndarray:
        return out.reshape(b, n)

    def state(self) -> dict:
        weights = {}
        for i, cell in enumerate(self.cells):
            for name, t in cell.items():
                weights[f"l{i}_{name}"] = t.data
        weights["head_W"] = self.head_w.data
        weights["head_b"] = self.head_b.data
        return {"arch": {"max_n": self.max_n, "units": self.units, "layers": self.layers},
                "weights": weights}

    @classmethod
    def from_state(cls, arch: dict, weights: dict) -> "LstmModel":
        model = cls(max_n=arch["max_n"], units=arch["units"], layers=arch["layers"])
        for i, cell in enumerate(model.cells):
            for name in cell:
                cell[name].data = np.array(weights[f"l{i}_{name}"], dtype=np.float64)
        model.head_w.data = np.array(weights["head_W"], dtype=np.float64)
        model.head_b.data = np.array(weights["head_b"], dtype=np.float64)
        return model


def lstm_forward(model: LstmModel, loads: np.ndarray, adjacency: np.ndarray,
                 training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
    """Single-sample forward: timestep i receives [all loads, adjacency row i]."""
    loads = np.asarray(loads, dtype=np.float64)
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if loads.shape != (model.max_n,) or adjacency.shape != (model.max_n, model.max_n):
        raise ValueError("unpadded input: pad loads and adjacency to max_n first")
    x = np.concatenate([np.tile(loads, (model.max_n, 1)), adjacency], axis=1)
    with ad.no_grad():
        out = model.forward_batch(x, batch=1, training=training, rng=rng)
    return out.data.reshape(-1)


Model = GcnModel | MlpModel | LstmModel

MODEL_KINDS = ("gcn", "mlp", "lstm")


def build_model(kind: str, max_n: int, node_ids: bool = False,
                include_adjacency_kernel: bool = False,
                rng: np.random.Generator | None = None) -> Model:
    if kind == "gcn":
        return GcnModel(max_n=max_n, node_ids=node_ids,
                        include_adjacency_kernel=include_adjacency_kernel, rng=rng)
    if kind == "mlp":
        return MlpModel(max_n=max_n, rng=rng)
    if kind == "lstm":
        return LstmModel(max_n=max_n, rng=rng)
    raise ValueError(f"unknown model kind {kind!r} (expected one of {MODEL_KINDS})")
