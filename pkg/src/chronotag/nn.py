"""Minimal numpy neural-network layers with exact analytic gradients.

Everything runs in float64 and is written so that a forward/backward pass is
a pure function of its inputs: no hidden global state, no threads, no
nondeterministic reductions. That is what makes bitwise-reproducible training
and finite-difference gradient checks possible.

Layers follow one convention: ``forward`` returns (output, cache) and
``backward(cache, dout)`` accumulates parameter gradients and returns the
gradient w.r.t. the layer input. Time-major shapes: (T, B, dim).
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError


class Parameter:
    """A named trainable tensor and its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], scale: float = 0.1) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    out = m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


class Linear:
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, name: str):
        self.w = Parameter(f"{name}.w", uniform_init(rng, (d_in, d_out)))
        self.b = Parameter(f"{name}.b", uniform_init(rng, (d_out,)))

    def parameters(self) -> list[Parameter]:
        return [self.w, self.b]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        return x @ self.w.value + self.b.value, (x,)

    def backward(self, cache: tuple, dout: np.ndarray) -> np.ndarray:
        (x,) = cache
        flat_x = x.reshape(-1, x.shape[-1])
        flat_d = dout.reshape(-1, dout.shape[-1])
        self.w.grad += flat_x.T @ flat_d
        self.b.grad += flat_d.sum(axis=0)
        return dout @ self.w.value.T


class Embedding:
    def __init__(self, rng: np.random.Generator, vocab_size: int, dim: int, name: str):
        self.table = Parameter(f"{name}.table", uniform_init(rng, (vocab_size, dim)))

    def parameters(self) -> list[Parameter]:
        return [self.table]

    def forward(self, ids: np.ndarray) -> tuple[np.ndarray, tuple]:
        return self.table.value[ids], (ids,)

    def backward(self, cache: tuple, dout: np.ndarray) -> None:
        (ids,) = cache
        np.add.at(self.table.grad, ids.reshape(-1), dout.reshape(-1, dout.shape[-1]))


class LSTM:
    """Single-layer LSTM over time-major input, with optional step mask.

    Gate layout along the last axis of the packed pre-activations is
    (input, forget, cell, output). A mask entry of 0 freezes the recurrent
    state for that sequence at that step, which is how padded batch slots
    are skipped.
    """

    def __init__(self, rng: np.random.Generator, d_in: int, d_h: int, name: str):
        self.d_in = d_in
        self.d_h = d_h
        self.w = Parameter(f"{name}.w", uniform_init(rng, (d_in, 4 * d_h)))
        self.u = Parameter(f"{name}.u", uniform_init(rng, (d_h, 4 * d_h)))
        self.b = Parameter(f"{name}.b", uniform_init(rng, (4 * d_h,)))

    def parameters(self) -> list[Parameter]:
        return [self.w, self.u, self.b]

    def forward(
        self,
        x: np.ndarray,
        mask: np.ndarray | None = None,
        h0: np.ndarray | None = None,
        c0: np.ndarray | None = None,
    ) -> tuple[np.ndarray, tuple]:
        T, B, _ = x.shape
        H = self.d_h
        xw = x.reshape(T * B, -1) @ self.w.value
        xw = xw.reshape(T, B, 4 * H) + self.b.value
        h_prev = np.zeros((B, H)) if h0 is None else h0
        c_prev = np.zeros((B, H)) if c0 is None else c0

        hs = np.empty((T, B, H))
        cs = np.empty((T, B, H))
        gates = np.empty((T, B, 4 * H))
        h_in = np.empty((T, B, H))  # recurrent input per step (post-mask h_{t-1})
        for t in range(T):
            h_in[t] = h_prev
            a = xw[t] + h_prev @ self.u.value
            i = sigmoid(a[:, :H])
            f = sigmoid(a[:, H:2 * H])
            g = np.tanh(a[:, 2 * H:3 * H])
            o = sigmoid(a[:, 3 * H:])
            c = f * c_prev + i * g
            h = o * np.tanh(c)
            if mask is not None:
                m = mask[t][:, None]
                h = m * h + (1.0 - m) * h_prev
                c = m * c + (1.0 - m) * c_prev
            gates[t, :, :H] = i
            gates[t, :, H:2 * H] = f
            gates[t, :, 2 * H:3 * H] = g
            gates[t, :, 3 * H:] = o
            hs[t] = h
            cs[t] = c
            h_prev, c_prev = h, c
        cache = (x, mask, gates, hs, cs, h_in, c0)
        return hs, cache

    def backward(self, cache: tuple, dh_out: np.ndarray) -> np.ndarray:
        x, mask, gates, hs, cs, h_in, c0 = cache
        T, B, H = dh_out.shape
        da_all = np.empty((T, B, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            i = gates[t, :, :H]
            f = gates[t, :, H:2 * H]
            g = gates[t, :, 2 * H:3 * H]
            o = gates[t, :, 3 * H:]
            c_prev = cs[t - 1] if t > 0 else (np.zeros((B, H)) if c0 is None else c0)

            dh = dh_out[t] + dh_next
            if mask is not None:
                m = mask[t][:, None]
                dh_new = m * dh
                dh_pass = (1.0 - m) * dh
                dc_new = m * dc_next
                dc_pass = (1.0 - m) * dc_next
            else:
                dh_new, dh_pass = dh, 0.0
                dc_new, dc_pass = dc_next, 0.0

            # cs[t] is post-mask; where masked, dh_new/dc_new are zero anyway
            tc = np.tanh(cs[t])
            do = dh_new * tc
            dc = dc_new + dh_new * o * (1.0 - tc * tc)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_prev = dc * f + dc_pass

            da = da_all[t]
            da[:, :H] = di * i * (1.0 - i)
            da[:, H:2 * H] = df * f * (1.0 - f)
            da[:, 2 * H:3 * H] = dg * (1.0 - g * g)
            da[:, 3 * H:] = do * o * (1.0 - o)

            self.u.grad += h_in[t].T @ da
            dh_next = da @ self.u.value.T + dh_pass
            dc_next = dc_prev
        flat_x = x.reshape(T * B, -1)
        flat_da = da_all.reshape(T * B, 4 * H)
        self.w.grad += flat_x.T @ flat_da
        self.b.grad += flat_da.sum(axis=0)
        return (flat_da @ self.w.value.T).reshape(x.shape)


def softmax_xent(
    logits: np.ndarray, targets: np.ndarray, mask: np.ndarray | None = None
) -> tuple[float, int, np.ndarray]:
    """Summed cross-entropy over the last axis plus its gradient.

    Returns (loss_sum, token_count, dlogits); dlogits corresponds to the
    *sum* of per-token losses, so callers scale it for means.
    """
    flat = logits.reshape(-1, logits.shape[-1])
    tgt = targets.reshape(-1)
    logp = log_softmax(flat)
    picked = logp[np.arange(flat.shape[0]), tgt]
    p = np.exp(logp)
    dflat = p
    dflat[np.arange(flat.shape[0]), tgt] -= 1.0
    if mask is None:
        count = flat.shape[0]
        loss = -picked.sum()
    else:
        m = mask.reshape(-1).astype(np.float64)
        count = int(m.sum())
        loss = -(picked * m).sum()
        dflat *= m[:, None]
    return float(loss), count, dflat.reshape(logits.shape)


def zero_grads(params: list[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def grad_norm(params: list[Parameter]) -> float:
    total = 0.0
    for p in params:
        total += float((p.grad * p.grad).sum())
    return float(np.sqrt(total))


def sgd_step(params: list[Parameter], lr: float, clip: float = 5.0) -> float:
    """Plain SGD with global gradient-norm clipping. Returns the raw norm."""
    norm = grad_norm(params)
    if not np.isfinite(norm):
        raise NumericalError("non-finite gradient norm; lower the learning rate")
    scale = lr if norm <= clip or clip <= 0 else lr * clip / norm
    for p in params:
        p.value -= scale * p.grad
    return norm
