"""Dense 2-D tensor engine with reverse-mode automatic differentiation.

Everything is a float64 matrix of shape (rows, cols). A batch of samples is
represented by stacking sample rows vertically, so all ops stay 2-D. The
engine records the forward graph through parent links on output tensors and
differentiates by a single reverse topological sweep.

Two fused ops exist for throughput on a single core: ``multi_kernel_apply``
(per-sample graph-kernel products, batched) and ``lstm_pass`` (a full
recurrent sequence with hand-derived backward). Both are gradient-checked
like every other op.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit as _sigmoid

_grad_enabled: bool = True


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """A 2-D float64 matrix with an optional gradient accumulator.

    Scalars are represented as 1x1 matrices. Non-finite values are rejected
    at construction so NaN/Inf surface at the op that produced them.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_backward_done")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2:
            raise ValueError(f"Tensor must be 2-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("Tensor rejects non-finite values (NaN/Inf)")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None
        self._backward_done = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data[0, 0])

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    """Wrap an op output, attaching the backward closure only when needed."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn(out)
    return out


def backward(loss: Tensor) -> None:
    """Populate grads of every reachable requires_grad tensor from a scalar loss.

    Visits each graph node exactly once in reverse topological order. A second
    call on the same loss without a fresh forward pass is an error.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss._backward_done:
        raise RuntimeError("backward() already called on this tensor; rerun the forward pass first")
    # iterative DFS topological sort over parent links
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    loss.accumulate_grad(np.ones((1, 1)))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()
    loss._backward_done = True


# ---------------------------------------------------------------------------
# core ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def make_backward(out):
        def fn():
            g = out.grad
            if a.requires_grad:
                a.accumulate_grad(g @ b.data.T)
            if b.requires_grad:
                b.accumulate_grad(a.data.T @ g)
        return fn

    return _result(data, (a, b), make_backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts a (1, n) second operand as a broadcast bias row."""
    _check_addable(a, b, "add")
    data = a.data + b.data

    def make_backward(out):
        def fn():
            g = out.grad
            if a.requires_grad:
                a.accumulate_grad(g)
            if b.requires_grad:
                b.accumulate_grad(g.sum(axis=0, keepdims=True) if b.rows == 1 and a.rows != 1 else g)
        return fn

    return _result(data, (a, b), make_backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_addable(a, b, "sub")
    data = a.data - b.data

    def make_backward(out):
        def fn():
            g = out.grad
            if a.requires_grad:
                a.accumulate_grad(g)
            if b.requires_grad:
                b.accumulate_grad(-(g.sum(axis=0, keepdims=True)) if b.rows == 1 and a.rows != 1 else -g)
        return fn

    return _result(data, (a, b), make_backward)


def _check_addable(a: Tensor, b: Tensor, opname: str) -> None:
    if a.shape == b.shape:
        return
    if b.rows == 1 and b.cols == a.cols:
        return
    raise ValueError(f"{opname} shape mismatch: {a.shape} vs {b.shape}")


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    data = a.data * c

    def make_backward(out):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * c)
        return fn

    return _result(data, (a,), make_backward)


def concat_columns(*tensors: Tensor) -> Tensor:
    rows = tensors[0].rows
    for t in tensors[1:]:
        if t.rows != rows:
            raise ValueError(f"concat_columns row mismatch: {[t.shape for t in tensors]}")
    data = np.concatenate([t.data for t in tensors], axis=1)
    widths = [t.cols for t in tensors]
    offsets = np.cumsum([0] + widths)

    def make_backward(out):
        def fn():
            g = out.grad
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    t.accumulate_grad(g[:, lo:hi])
        return fn

    return _result(data, tensors, make_backward)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def make_backward(out):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * (a.data > 0.0))
        return fn

    return _result(data, (a,), make_backward)


def sigmoid(a: Tensor) -> Tensor:
    data = _sigmoid(a.data)

    def make_backward(out):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * data * (1.0 - data))
        return fn

    return _result(data, (a,), make_backward)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def make_backward(out):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * (1.0 - data * data))
        return fn

    return _result(data, (a,), make_backward)


def dropout(a: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-rate) at train time, identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = rng.random(a.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    mask = keep * scale
    data = a.data * mask

    def make_backward(out):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * mask)
        return fn

    return _result(data, (a,), make_backward)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    data = np.array([[np.mean(diff * diff)]])

    def make_backward(out):
        def fn():
            g = out.grad[0, 0]
            if pred.requires_grad:
                pred.accumulate_grad(g * 2.0 * diff / n)
            if target.requires_grad:
                target.accumulate_grad(-g * 2.0 * diff / n)
        return fn

    return _result(data, (pred, target), make_backward)


def masked_mse_loss(pred: Tensor, target: Tensor, mask: np.ndarray) -> Tensor:
    """MSE over entries where mask is 1; pad entries (mask 0) contribute nothing."""
    if pred.shape != target.shape:
        raise ValueError(f"masked_mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    mask = np.asarray(mask, dtype=np.float64).reshape(pred.shape)
    count = mask.sum()
    if count == 0:
        raise ValueError("masked_mse_loss: mask selects no entries")
    diff = (pred.data - target.data) * mask
    data = np.array([[np.sum(diff * diff) / count]])

    def make_backward(out):
        def fn():
            g = out.grad[0, 0]
            if pred.requires_grad:
                pred.accumulate_grad(g * 2.0 * diff / count)
            if target.requires_grad:
                target.accumulate_grad(-g * 2.0 * diff / count)
        return fn

    return _result(data, (pred, target), make_backward)


# ---------------------------------------------------------------------------
# fused ops


def multi_kernel_apply(kernels: np.ndarray, h: Tensor, batch: int) -> Tensor:
    """Column-concat of per-sample kernel products, for a stacked batch.

    ``kernels`` has shape (k, batch, n, n) and is constant (not differentiated).
    ``h`` is the stacked node-feature matrix (batch*n, d). Returns
    (batch*n, k*d): columns [j*d:(j+1)*d] hold kernel j applied to each
    sample's feature block.
    """
    kernels = np.asarray(kernels, dtype=np.float64)
    k, b, n, n2 = kernels.shape
    if n != n2 or b != batch or h.rows != batch * n:
        raise ValueError(f"multi_kernel_apply shape mismatch: kernels {kernels.shape}, h {h.shape}, batch {batch}")
    d = h.cols
    h3 = h.data.reshape(batch, n, d)
    out = np.empty((batch * n, k * d))
    for j in range(k):
        out[:, j * d:(j + 1) * d] = np.matmul(kernels[j], h3).reshape(batch * n, d)

    def make_backward(o):
        def fn():
            if h.requires_grad:
                g = o.grad
                dh = np.zeros((batch, n, d))
                for j in range(k):
                    gj = g[:, j * d:(j + 1) * d].reshape(batch, n, d)
                    dh += np.matmul(kernels[j].transpose(0, 2, 1), gj)
                h.accumulate_grad(dh.reshape(batch * n, d))
        return fn

    return _result(out, (h,), make_backward)


def lstm_pass(x: Tensor, w: Tensor, u: Tensor, b: Tensor, batch: int, reverse: bool = False) -> Tensor:
    """One direction of an LSTM over a stacked sequence batch.

    ``x`` is (batch*steps, features) with sample-major stacking: row t + s*steps
    is timestep t of sample s. Gate order in the packed weight matrices is
    (input, forget, output, cell); ``w`` is (features, 4*hidden), ``u`` is
    (hidden, 4*hidden), ``b`` is (1, 4*hidden). Initial hidden/cell state is
    zero. Returns the hidden-state sequence, stacked like ``x``.
    """
    f_in = x.cols
    hidden = u.rows
    if w.shape != (f_in, 4 * hidden) or u.shape != (hidden, 4 * hidden) or b.shape != (1, 4 * hidden):
        raise ValueError(f"lstm_pass weight shapes inconsistent: w {w.shape}, u {u.shape}, b {b.shape}")
    if x.rows % batch != 0:
        raise ValueError(f"lstm_pass: rows {x.rows} not divisible by batch {batch}")
    steps = x.rows // batch
    hd = hidden

    x3 = x.data.reshape(batch, steps, f_in)
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    # single projection of all timesteps through w, then step the recurrence
    xw = np.matmul(x3, w.data) + b.data  # (batch, steps, 4h)
    h_t = np.zeros((batch, hd))
    c_t = np.zeros((batch, hd))
    hs = np.empty((batch, steps, hd))
    cs = np.empty((batch, steps, hd))
    tcs = np.empty((batch, steps, hd))  # tanh(c_t), reused by backward
    gates = np.empty((batch, steps, 4 * hd))
    for t in order:
        a = xw[:, t, :] + h_t @ u.data
        sig = _sigmoid(a[:, :3 * hd])  # input, forget, output gates share one squashing
        g_g = np.tanh(a[:, 3 * hd:])
        c_t = sig[:, hd:2 * hd] * c_t + sig[:, :hd] * g_g
        tanh_c = np.tanh(c_t)
        h_t = sig[:, 2 * hd:3 * hd] * tanh_c
        hs[:, t, :] = h_t
        cs[:, t, :] = c_t
        tcs[:, t, :] = tanh_c
        gates[:, t, :3 * hd] = sig
        gates[:, t, 3 * hd:] = g_g

    def make_backward(out):
        def fn():
            g3 = out.grad.reshape(batch, steps, hd)
            dh_next = np.zeros((batch, hd))
            dc_next = np.zeros((batch, hd))
            dw = np.zeros_like(w.data) if w.requires_grad else None
            du = np.zeros_like(u.data) if u.requires_grad else None
            db = np.zeros_like(b.data) if b.requires_grad else None
            dx3 = np.empty((batch, steps, f_in)) if x.requires_grad else None
            zeros = np.zeros((batch, hd))
            seq = list(order)
            for idx in range(steps - 1, -1, -1):
                t = seq[idx]
                t_prev = seq[idx - 1] if idx > 0 else None
                i_g = gates[:, t, :hd]
                f_g = gates[:, t, hd:2 * hd]
                o_g = gates[:, t, 2 * hd:3 * hd]
                g_g = gates[:, t, 3 * hd:]
                c_prev = cs[:, t_prev, :] if t_prev is not None else zeros
                h_prev = hs[:, t_prev, :] if t_prev is not None else zeros
                tanh_c = tcs[:, t, :]
                dh = g3[:, t, :] + dh_next
                dc = dc_next + dh * o_g * (1.0 - tanh_c * tanh_c)
                da = np.empty((batch, 4 * hd))
                da[:, :hd] = dc * g_g
                da[:, hd:2 * hd] = dc * c_prev
                da[:, 2 * hd:3 * hd] = dh * tanh_c
                sig = gates[:, t, :3 * hd]
                da[:, :3 * hd] *= sig * (1.0 - sig)
                da[:, 3 * hd:] = dc * i_g * (1.0 - g_g * g_g)
                if dw is not None:
                    dw += x3[:, t, :].T @ da
                if du is not None:
                    du += h_prev.T @ da
                if db is not None:
                    db += da.sum(axis=0)
                if dx3 is not None:
                    dx3[:, t, :] = da @ w.data.T
                dh_next = da @ u.data.T
                dc_next = dc * f_g
            if dw is not None:
                w.accumulate_grad(dw)
            if du is not None:
                u.accumulate_grad(du)
            if db is not None:
                b.accumulate_grad(db)
            if dx3 is not None:
                x.accumulate_grad(dx3.reshape(batch * steps, f_in))
        return fn

    return _result(hs.reshape(batch * steps, hd), (x, w, u, b), make_backward)


# ---------------------------------------------------------------------------
# gradient checking


def finite_diff_check(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], epsilon: float = 1e-5) -> float:
    """Max relative error between reverse-mode grads and central differences.

    ``fn`` maps Tensors (one per entry of ``inputs``) to a scalar Tensor; it
    must be deterministic across calls. Relative error per entry is
    |a-b| / max(|a|, |b|, 1e-8).
    """
    tensors = [Tensor(np.asarray(x, dtype=np.float64), requires_grad=True) for x in inputs]
    loss = fn(*tensors)
    backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    max_err = 0.0
    for t, grad in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + epsilon
            with no_grad():
                f_plus = fn(*tensors).item()
            flat[idx] = orig - epsilon
            with no_grad():
                f_minus = fn(*tensors).item()
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            a = grad.reshape(-1)[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            max_err = max(max_err, err)
    return max_err
