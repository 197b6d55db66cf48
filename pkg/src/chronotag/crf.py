"""Linear-chain CRF: path scores, log-partition, Viterbi, NLL and gradients.

Transition matrix convention: for K real tags, ``transitions`` is a
(K+2, K+2) matrix whose row/column K is the virtual START state and K+1 the
virtual STOP state. ``transitions[i, j]`` scores tag j following tag i; a
path additionally pays START -> first tag and last tag -> STOP.

All recursions run in log space. Batched variants operate on time-major
(T, B, K) emissions with a 0/1 mask; every sequence must be live at t=0.
Ties in Viterbi break toward the lowest tag index (np.argmax picks the first
maximum), so decoding is deterministic.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DataError
from .nn import logsumexp


def _check(emissions: np.ndarray, transitions: np.ndarray) -> tuple[int, int]:
    n, k = emissions.shape
    if n < 1:
        raise DataError("emissions must cover at least one position")
    if transitions.shape != (k + 2, k + 2):
        raise DataError(
            f"transition matrix must be ({k + 2}, {k + 2}) for {k} tags, got {transitions.shape}"
        )
    return n, k


def crf_score(emissions: np.ndarray, transitions: np.ndarray, tags: Sequence[int]) -> float:
    """Score of one tag path, including the START and STOP transitions."""
    n, k = _check(emissions, transitions)
    if len(tags) != n:
        raise DataError(f"path length {len(tags)} does not match {n} emission rows")
    start, stop = k, k + 1
    total = transitions[start, tags[0]] + emissions[0, tags[0]]
    for t in range(1, n):
        total += transitions[tags[t - 1], tags[t]] + emissions[t, tags[t]]
    total += transitions[tags[n - 1], stop]
    return float(total)


def crf_log_partition(emissions: np.ndarray, transitions: np.ndarray) -> float:
    """log sum over all K^n paths of exp(path score), by the forward recursion."""
    n, k = _check(emissions, transitions)
    logz, _ = forward_batch(emissions[:, None, :], transitions, np.ones((n, 1)))
    return float(logz[0])


def viterbi_decode(emissions: np.ndarray, transitions: np.ndarray) -> tuple[list[int], float]:
    """Best-scoring tag path and its score."""
    n, _ = _check(emissions, transitions)
    paths, scores = viterbi_batch(emissions[:, None, :], transitions, np.ones((n, 1)))
    return paths[0], float(scores[0])


def crf_nll(emissions: np.ndarray, transitions: np.ndarray, tags: Sequence[int]) -> float:
    """Negative log-likelihood of the gold path: log Z minus the path score."""
    return crf_log_partition(emissions, transitions) - crf_score(emissions, transitions, tags)


def crf_nll_grad(
    emissions: np.ndarray, transitions: np.ndarray, tags: Sequence[int]
) -> tuple[float, np.ndarray, np.ndarray]:
    """NLL plus its gradients w.r.t. emissions and transitions."""
    n, k = _check(emissions, transitions)
    mask = np.ones((n, 1))
    em = emissions[:, None, :]
    tag_arr = np.asarray(tags, dtype=np.int64)[:, None]
    logz, cache = forward_batch(em, transitions, mask)
    d_em, d_trans = backward_batch(cache, np.ones(1))
    gold, g_em, g_trans = gold_score_batch(em, transitions, tag_arr, mask)
    nll = float(logz[0] - gold[0])
    return nll, (d_em - g_em)[:, 0, :], d_trans - g_trans


# ---------------------------------------------------------------------------
# Batched internals
# ---------------------------------------------------------------------------

def forward_batch(
    emissions: np.ndarray, transitions: np.ndarray, mask: np.ndarray
) -> tuple[np.ndarray, tuple]:
    """Forward algorithm over a batch; returns per-sequence log Z and a cache.

    ``mask[t, b]`` is 1 while sequence b is live; dead steps leave that
    sequence's alpha untouched.
    """
    T, B, K = emissions.shape
    start, stop = K, K + 1
    inner = transitions[:K, :K]
    alphas = np.empty((T, B, K))
    alpha = transitions[start, :K][None, :] + emissions[0]
    alphas[0] = alpha
    for t in range(1, T):
        combined = alpha[:, :, None] + inner[None, :, :] + emissions[t][:, None, :]
        new_alpha = logsumexp(combined, axis=1)
        m = mask[t][:, None]
        alpha = m * new_alpha + (1.0 - m) * alpha
        alphas[t] = alpha
    final = alpha + transitions[:K, stop][None, :]
    logz = logsumexp(final, axis=1)
    cache = (emissions, transitions, mask, alphas, final, logz)
    return logz, cache


def backward_batch(cache: tuple, dlogz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reverse-mode pass through the forward recursion.

    ``dlogz`` holds one upstream gradient per sequence. Returns gradients
    w.r.t. emissions (T, B, K) and transitions (K+2, K+2); this equals the
    expected-feature-count form of the forward-backward algorithm.
    """
    emissions, transitions, mask, alphas, final, logz = cache
    T, B, K = emissions.shape
    start, stop = K, K + 1
    inner = transitions[:K, :K]
    d_em = np.zeros_like(emissions)
    d_trans = np.zeros_like(transitions)

    # final logsumexp: softmax over final scores
    d_alpha = np.exp(final - logz[:, None]) * dlogz[:, None]
    d_trans[:K, stop] += d_alpha.sum(axis=0)

    for t in range(T - 1, 0, -1):
        alpha_prev = alphas[t - 1]
        combined = alpha_prev[:, :, None] + inner[None, :, :] + emissions[t][:, None, :]
        # softmax over the "previous tag" axis of each (b, j) cell
        w = np.exp(combined - logsumexp(combined, axis=1)[:, None, :])
        m = mask[t][:, None]
        dC = w * (d_alpha * m)[:, None, :]
        d_em[t] = dC.sum(axis=1)
        d_trans[:K, :K] += dC.sum(axis=0)
        d_alpha = dC.sum(axis=2) + d_alpha * (1.0 - m)
    d_em[0] = d_alpha
    d_trans[start, :K] += d_alpha.sum(axis=0)
    return d_em, d_trans


def gold_score_batch(
    emissions: np.ndarray, transitions: np.ndarray, tags: np.ndarray, mask: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scores of the gold paths plus unit-weight gradients.

    ``tags`` is (T, B) int64; entries under a dead mask are ignored. The
    returned gradients assume an upstream weight of 1 per sequence.
    """
    T, B, K = emissions.shape
    start, stop = K, K + 1
    lengths = mask.sum(axis=0).astype(np.int64)
    if np.any(lengths < 1):
        raise DataError("every sequence in a batch must have at least one live step")
    batch_idx = np.arange(B)

    scores = transitions[start, tags[0]] + emissions[0, batch_idx, tags[0]]
    g_em = np.zeros_like(emissions)
    g_trans = np.zeros_like(transitions)
    g_em[0, batch_idx, tags[0]] = 1.0
    np.add.at(g_trans, (np.full(B, start), tags[0]), 1.0)
    for t in range(1, T):
        m = mask[t]
        scores = scores + m * (
            transitions[tags[t - 1], tags[t]] + emissions[t, batch_idx, tags[t]]
        )
        g_em[t, batch_idx, tags[t]] = m
        np.add.at(g_trans, (tags[t - 1], tags[t]), m)
    last_tags = tags[lengths - 1, batch_idx]
    scores = scores + transitions[last_tags, stop]
    np.add.at(g_trans, (last_tags, np.full(B, stop)), 1.0)
    return scores, g_em, g_trans


def nll_batch(
    emissions: np.ndarray, transitions: np.ndarray, tags: np.ndarray, mask: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean NLL over the batch and its gradients (emissions, transitions)."""
    B = emissions.shape[1]
    logz, cache = forward_batch(emissions, transitions, mask)
    gold, g_em, g_trans = gold_score_batch(emissions, transitions, tags, mask)
    nll = float((logz - gold).mean())
    d_em, d_trans = backward_batch(cache, np.full(B, 1.0 / B))
    d_em -= g_em / B
    d_trans -= g_trans / B
    return nll, d_em, d_trans


def viterbi_batch(
    emissions: np.ndarray, transitions: np.ndarray, mask: np.ndarray
) -> tuple[list[list[int]], np.ndarray]:
    """Best path per sequence; ties resolve to the lowest tag index."""
    T, B, K = emissions.shape
    start, stop = K, K + 1
    inner = transitions[:K, :K]
    lengths = mask.sum(axis=0).astype(np.int64)
    if np.any(lengths < 1):
        raise DataError("every sequence in a batch must have at least one live step")

    delta = transitions[start, :K][None, :] + emissions[0]
    deltas = np.empty((T, B, K))
    deltas[0] = delta
    backptr = np.zeros((T, B, K), dtype=np.int64)
    for t in range(1, T):
        combined = delta[:, :, None] + inner[None, :, :] + emissions[t][:, None, :]
        backptr[t] = combined.argmax(axis=1)
        new_delta = combined.max(axis=1)
        m = mask[t][:, None]
        delta = m * new_delta + (1.0 - m) * delta
        deltas[t] = delta

    paths: list[list[int]] = []
    scores = np.empty(B)
    for b in range(B):
        end = int(lengths[b]) - 1
        final = deltas[end, b] + transitions[:K, stop]
        tag = int(final.argmax())
        scores[b] = final[tag]
        rev = [tag]
        for t in range(end, 0, -1):
            tag = int(backptr[t, b, tag])
            rev.append(tag)
        paths.append(rev[::-1])
    return paths, scores
