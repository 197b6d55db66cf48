"""Finite-difference gradient checks for the numpy layers.

Central differences with step 1e-4 on tiny instances; the analytic gradient
must agree within relative error 1e-4 on every element of every tensor.
"""

import numpy as np
import pytest

from chronotag.errors import NumericalError
from chronotag.nn import (
    LSTM,
    Embedding,
    Linear,
    Parameter,
    log_softmax,
    sgd_step,
    sigmoid,
    softmax_xent,
    zero_grads,
)

STEP = 1e-4
TOL = 1e-4


def rel_err(a: np.ndarray, n: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
    return float(np.max(np.abs(a - n) / denom))


def fd_check(params, loss_fn, step=STEP, tol=TOL):
    """Compare each parameter's analytic grad against central differences."""
    zero_grads(params)
    loss_fn(compute_grads=True)
    for p in params:
        analytic = p.grad.copy()
        numeric = np.zeros_like(analytic)
        flat = p.value.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn(compute_grads=False)
            flat[i] = orig - step
            lo = loss_fn(compute_grads=False)
            flat[i] = orig
            nflat[i] = (hi - lo) / (2 * step)
        err = rel_err(analytic, numeric)
        assert err < tol, f"{p.name}: rel err {err:.3e}"


def test_linear_gradients():
    rng = np.random.default_rng(0)
    layer = Linear(rng, 3, 2, "lin")
    x = rng.normal(size=(4, 3))
    target = rng.normal(size=(4, 2))

    def loss_fn(compute_grads):
        y, cache = layer.forward(x)
        loss = 0.5 * float(((y - target) ** 2).sum())
        if compute_grads:
            zero_grads(layer.parameters())
            layer.backward(cache, y - target)
        return loss

    fd_check(layer.parameters(), loss_fn)


def test_linear_input_gradient():
    rng = np.random.default_rng(1)
    layer = Linear(rng, 3, 2, "lin")
    x = rng.normal(size=(5, 3))
    target = rng.normal(size=(5, 2))
    y, cache = layer.forward(x)
    dx = layer.backward(cache, y - target)
    numeric = np.zeros_like(x)
    for i in range(x.size):
        orig = x.reshape(-1)[i]
        x.reshape(-1)[i] = orig + STEP
        hi = 0.5 * float(((layer.forward(x)[0] - target) ** 2).sum())
        x.reshape(-1)[i] = orig - STEP
        lo = 0.5 * float(((layer.forward(x)[0] - target) ** 2).sum())
        x.reshape(-1)[i] = orig
        numeric.reshape(-1)[i] = (hi - lo) / (2 * STEP)
    assert rel_err(dx, numeric) < TOL


def test_embedding_gradients():
    rng = np.random.default_rng(2)
    emb = Embedding(rng, 5, 3, "emb")
    ids = np.array([[0, 1], [1, 4], [2, 2]])
    target = rng.normal(size=(3, 2, 3))

    def loss_fn(compute_grads):
        y, cache = emb.forward(ids)
        loss = 0.5 * float(((y - target) ** 2).sum())
        if compute_grads:
            zero_grads(emb.parameters())
            emb.backward(cache, y - target)
        return loss

    fd_check(emb.parameters(), loss_fn)


@pytest.mark.parametrize("use_mask", [False, True])
def test_lstm_gradients(use_mask):
    rng = np.random.default_rng(3)
    cell = LSTM(rng, 3, 4, "lstm")
    x = rng.normal(size=(6, 2, 3))
    mask = None
    if use_mask:
        mask = np.ones((6, 2))
        mask[4:, 1] = 0.0  # second sequence ends early
    target = rng.normal(size=(6, 2, 4))

    def loss_fn(compute_grads):
        h, cache = cell.forward(x, mask=mask)
        m = 1.0 if mask is None else mask[:, :, None]
        diff = (h - target) * m
        loss = 0.5 * float((diff ** 2).sum())
        if compute_grads:
            zero_grads(cell.parameters())
            cell.backward(cache, diff)
        return loss

    fd_check(cell.parameters(), loss_fn)


def test_lstm_input_gradient():
    rng = np.random.default_rng(4)
    cell = LSTM(rng, 2, 3, "lstm")
    x = rng.normal(size=(4, 2, 2))
    target = rng.normal(size=(4, 2, 3))
    h, cache = cell.forward(x)
    dx = cell.backward(cache, h - target)
    numeric = np.zeros_like(x)
    flat = x.reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + STEP
        hi = 0.5 * float(((cell.forward(x)[0] - target) ** 2).sum())
        flat[i] = orig - STEP
        lo = 0.5 * float(((cell.forward(x)[0] - target) ** 2).sum())
        flat[i] = orig
        nflat[i] = (hi - lo) / (2 * STEP)
    assert rel_err(dx, numeric) < TOL


def test_lstm_mask_freezes_state():
    rng = np.random.default_rng(5)
    cell = LSTM(rng, 2, 3, "lstm")
    x = rng.normal(size=(5, 1, 2))
    mask = np.ones((5, 1))
    mask[3:] = 0.0
    h, _ = cell.forward(x, mask=mask)
    assert np.array_equal(h[2], h[3])
    assert np.array_equal(h[3], h[4])


def test_softmax_xent_gradient_and_value():
    rng = np.random.default_rng(6)
    logits = rng.normal(size=(4, 5))
    targets = np.array([0, 2, 4, 1])
    loss, count, dlogits = softmax_xent(logits, targets)
    assert count == 4
    numeric = np.zeros_like(logits)
    flat = logits.reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + STEP
        hi, _, _ = softmax_xent(logits, targets)
        flat[i] = orig - STEP
        lo, _, _ = softmax_xent(logits, targets)
        flat[i] = orig
        nflat[i] = (hi - lo) / (2 * STEP)
    assert rel_err(dlogits, numeric) < TOL


def test_softmax_xent_mask_excludes_tokens():
    logits = np.zeros((3, 4))
    targets = np.array([0, 1, 2])
    mask = np.array([1.0, 0.0, 1.0])
    loss, count, dlogits = softmax_xent(logits, targets, mask)
    assert count == 2
    assert loss == pytest.approx(2 * np.log(4))
    assert np.all(dlogits[1] == 0)


def test_softmax_normalization():
    rng = np.random.default_rng(7)
    logits = rng.normal(size=(10, 6)) * 30
    p = np.exp(log_softmax(logits))
    assert np.max(np.abs(p.sum(axis=-1) - 1.0)) < 1e-6


def test_sigmoid_extremes_are_stable():
    x = np.array([-1e4, -50.0, 0.0, 50.0, 1e4])
    y = sigmoid(x)
    assert np.all(np.isfinite(y))
    assert y[0] == 0.0 or y[0] < 1e-300
    assert y[-1] == 1.0 or y[-1] > 1 - 1e-15
    assert y[2] == 0.5


def test_sgd_clips_global_norm():
    p = Parameter("p", np.zeros(4))
    p.grad[:] = np.array([3.0, 4.0, 0.0, 0.0]) * 10  # norm 50
    sgd_step([p], lr=1.0, clip=5.0)
    # update = lr * (clip / norm) * grad, so the step itself has norm `clip`
    assert np.allclose(p.value, [-3.0, -4.0, 0.0, 0.0])
    assert np.linalg.norm(p.value) == pytest.approx(5.0)


def test_sgd_rejects_nonfinite():
    p = Parameter("p", np.zeros(2))
    p.grad[:] = np.array([np.nan, 0.0])
    with pytest.raises(NumericalError):
        sgd_step([p], lr=0.1)
