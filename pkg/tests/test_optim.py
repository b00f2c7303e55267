import numpy as np
import pytest

from airtime import autodiff as ad
from airtime.autodiff import Tensor
from airtime.optim import Adam, Sgd, make_optimizer


def _square_loss(w: Tensor, center: float = 0.0) -> Tensor:
    return ad.mse_loss(w, Tensor([[center]]))


def test_zero_gradient_leaves_params_unchanged():
    for cls in (lambda p: Sgd(p, lr=0.1), lambda p: Adam(p, lr=0.1)):
        w = Tensor([[1.5]], requires_grad=True)
        opt = cls([w])
        w.grad = np.zeros_like(w.data)
        opt.step()
        assert w.data[0, 0] == 1.5


def test_sgd_single_step_hand_case():
    # f(w) = w^2 from w=1, lr 0.1: w <- 1 - 0.1 * 2 = 0.8
    w = Tensor([[1.0]], requires_grad=True)
    loss = _square_loss(w)
    ad.backward(loss)
    Sgd([w], lr=0.1).step()
    assert w.data[0, 0] == pytest.approx(0.8)


def test_adam_converges_on_shifted_quadratic():
    # independent Adam recursion puts |w-3| ~ 5e-5 after 200 steps at lr 0.1
    w = Tensor([[0.0]], requires_grad=True)
    opt = Adam([w], lr=0.1)
    for _ in range(200):
        loss = _square_loss(w, center=3.0)
        ad.backward(loss)
        opt.step()
        opt.zero_grad()
    assert abs(w.data[0, 0] - 3.0) < 0.01


def test_adam_matches_reference_recursion():
    # cross-check the in-place update against a transliterated scalar recursion
    w = Tensor([[0.5]], requires_grad=True)
    opt = Adam([w], lr=0.05)
    ref_w, m, v = 0.5, 0.0, 0.0
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, 26):
        loss = _square_loss(w, center=2.0)
        ad.backward(loss)
        g = 2 * (ref_w - 2.0)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        ref_w -= 0.05 * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        opt.step()
        opt.zero_grad()
        assert w.data[0, 0] == pytest.approx(ref_w, abs=1e-12)


def test_make_optimizer_rejects_unknown():
    with pytest.raises(ValueError):
        make_optimizer("rmsprop", [], lr=0.1)
