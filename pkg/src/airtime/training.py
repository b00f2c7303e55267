"""Training loop, high-load oversampling, and metric aggregation.

Training minimizes masked MSE over real (non-pad) nodes with per-epoch
seeded shuffling, tracks the best validation loss, and restores those
weights at the end. Identical seeds give identical loss histories.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .models import Model, pad_dataset
from .optim import make_optimizer
from .telemetry import Dataset, LabeledSample, high_load_filter, is_high_load

EVAL_BATCH = 512


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    oversample_factor: int = 10
    high_load_threshold: float = 0.10
    patience: int = 10

    def __post_init__(self):
        if self.oversample_factor < 1:
            raise ValueError(f"oversample_factor must be >= 1, got {self.oversample_factor}")
        if not 0.0 <= self.high_load_threshold <= 1.0:
            raise ValueError(f"high_load_threshold must lie in [0, 1], got {self.high_load_threshold}")


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    mse: float
    p5: float
    p25: float
    p50: float
    p75: float
    p95: float
    sample_count: int
    node_count: int

    def as_dict(self) -> dict:
        return {
            "mae": self.mae, "mse": self.mse,
            "p5": self.p5, "p25": self.p25, "p50": self.p50, "p75": self.p75, "p95": self.p95,
            "sample_count": self.sample_count, "node_count": self.node_count,
        }


@dataclass
class TrainResult:
    model: Model
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")
    elapsed_s: float = 0.0


def oversample_high_load(dataset: Dataset, factor: int = 10, threshold: float = 0.10,
                         seed: int = 0) -> Dataset:
    """Repeat each high-load sample `factor` times, then shuffle by seed.

    factor 1 is the exact identity (order preserved), so training on the
    result equals training on the raw dataset.
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return dataset
    out: list[LabeledSample] = []
    for s in dataset:
        out.extend([s] * (factor if is_high_load(s, threshold) else 1))
    order = np.random.default_rng(seed).permutation(len(out))
    return Dataset(samples=tuple(out[i] for i in order), role=dataset.role)


def _masked_val_loss(model: Model, prep: dict) -> float:
    """Masked MSE over all real nodes of every sample, batched, no graph."""
    total_sq = 0.0
    total_cnt = 0.0
    count = prep["labels"].shape[0]
    with ad.no_grad():
        for start in range(0, count, EVAL_BATCH):
            idx = np.arange(start, min(start + EVAL_BATCH, count))
            out = model.forward_prepared(prep, idx, training=False)
            target, mask = model.loss_pair(prep, idx)
            diff = (out.data - target.reshape(out.data.shape)) * mask.reshape(out.data.shape)
            total_sq += float(np.sum(diff * diff))
            total_cnt += float(mask.sum())
    return total_sq / total_cnt


def train(model: Model, train_set: Dataset | Sequence[LabeledSample],
          val_set: Dataset | Sequence[LabeledSample], config: TrainConfig) -> TrainResult:
    """Minimize masked MSE; early-stop on validation and keep the best weights."""
    train_samples = pad_dataset(list(train_set), model.max_n)
    val_samples = pad_dataset(list(val_set), model.max_n)
    if not train_samples or not val_samples:
        raise ValueError("train and validation sets must be non-empty")
    t0 = time.perf_counter()
    prep_train = model.prepare(train_samples)
    prep_val = model.prepare(val_samples)
    rng = np.random.default_rng(config.seed)
    opt = make_optimizer(config.optimizer, model.parameters(), config.lr)
    result = TrainResult(model=model)
    best_weights: list[np.ndarray] | None = None
    stale = 0
    n_train = len(train_samples)
    for epoch in range(config.epochs):
        order = rng.permutation(n_train)
        epoch_sq = 0.0
        epoch_cnt = 0.0
        for start in range(0, n_train, config.batch_size):
            idx = order[start:start + config.batch_size]
            out = model.forward_prepared(prep_train, idx, training=True, rng=rng)
            target, mask = model.loss_pair(prep_train, idx)
            loss = ad.masked_mse_loss(out, Tensor(target.reshape(out.data.shape)),
                                      mask.reshape(out.data.shape))
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise RuntimeError(f"training aborted: non-finite loss at epoch {epoch}")
            m = float(np.sum(mask))
            epoch_sq += loss_value * m
            epoch_cnt += m
            ad.backward(loss)
            opt.step()
            opt.zero_grad()
        result.train_losses.append(epoch_sq / epoch_cnt)
        val_loss = _masked_val_loss(model, prep_val)
        result.val_losses.append(val_loss)
        if val_loss < result.best_val_loss:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            best_weights = [p.data.copy() for p in model.parameters()]
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    if best_weights is not None:
        for p, w in zip(model.parameters(), best_weights):
            p.data = w
    result.elapsed_s = time.perf_counter() - t0
    return result


# ---------------------------------------------------------------------------
# evaluation


def predict_dataset(model: Model, samples: Sequence[LabeledSample]) -> np.ndarray:
    """Batched inference over padded samples; returns (N, max_n) estimates."""
    padded = pad_dataset(list(samples), model.max_n)
    prep = model.prepare(padded)
    count = len(padded)
    n = prep["n"]
    preds = np.zeros((count, n))
    with ad.no_grad():
        for start in range(0, count, EVAL_BATCH):
            idx = np.arange(start, min(start + EVAL_BATCH, count))
            out = model.forward_prepared(prep, idx, training=False)
            preds[idx] = model.reshape_predictions(out.data, len(idx), n)
    return preds


SamplePredictor = Callable[[LabeledSample], np.ndarray]


def per_node_abs_errors(predictions: Sequence[np.ndarray],
                        samples: Sequence[LabeledSample]) -> np.ndarray:
    """Pooled |estimate - label| over real nodes of every sample."""
    errs = []
    for pred, s in zip(predictions, samples):
        real = s.real_mask > 0
        pred = np.asarray(pred)
        if pred.shape[0] != s.n:
            raise ValueError(f"prediction length {pred.shape[0]} != sample n {s.n}")
        errs.append(np.abs(pred[real] - s.labels[real]))
    return np.concatenate(errs)


def metrics_from_errors(errors: np.ndarray, sample_count: int) -> MetricsReport:
    errors = np.asarray(errors, dtype=np.float64)
    p = np.percentile(errors, (5.0, 25.0, 50.0, 75.0, 95.0))
    return MetricsReport(
        mae=float(np.mean(errors)), mse=float(np.mean(errors * errors)),
        p5=float(p[0]), p25=float(p[1]), p50=float(p[2]), p75=float(p[3]), p95=float(p[4]),
        sample_count=sample_count, node_count=int(errors.size),
    )


def evaluate(model_or_predictor: Model | SamplePredictor,
             dataset: Dataset | Sequence[LabeledSample],
             high_load_only: bool = False,
             high_load_threshold: float = 0.10) -> tuple[MetricsReport, np.ndarray]:
    """Per-node absolute errors over (optionally high-load) samples.

    Returns the aggregate report plus the raw pooled error vector so the
    aggregates stay re-derivable.
    """
    samples = Dataset(tuple(dataset)) if not isinstance(dataset, Dataset) else dataset
    if high_load_only:
        samples = high_load_filter(samples, high_load_threshold)
    if len(samples) == 0:
        raise ValueError("no samples to evaluate (empty after high-load filter)")
    if hasattr(model_or_predictor, "forward_prepared"):
        preds_padded = predict_dataset(model_or_predictor, samples.samples)
        preds = [preds_padded[i, :s.n] for i, s in enumerate(samples)]
    else:
        preds = [model_or_predictor(s) for s in samples]
    errors = per_node_abs_errors(preds, samples.samples)
    return metrics_from_errors(errors, len(samples)), errors
