"""Vectorized numpy implementations of the per-query loss kernels.

Every kernel takes one query's ``labels`` and ``scores`` (1-d float64 arrays of
equal length) plus a scalar option and returns ``(value, grad)``.
"""

import numpy as np


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x):
    # log(1 + e^x) without overflow
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _logsumexp(x):
    m = x.max()
    return m + np.log(np.exp(x - m).sum())


def descending_order(values):
    """Indices sorting ``values`` high to low, ties by ascending index."""
    return np.argsort(-values, kind="mergesort")


def max_dcg(labels):
    gains = np.exp2(np.sort(labels)[::-1]) - 1.0
    ranks = np.arange(1, labels.shape[0] + 1, dtype=np.float64)
    return float(np.sum(gains / np.log1p(ranks)))


def _pair_mask(labels):
    return labels[:, None] > labels[None, :]


def hinge(labels, scores, option):
    mask = _pair_mask(labels)
    margin = 1.0 - (scores[:, None] - scores[None, :])
    active = mask & (margin > 0.0)
    value = float(margin[active].sum())
    grad = active.sum(axis=0) - active.sum(axis=1)
    return value, grad.astype(np.float64)


def _weighted_logistic(labels, scores, weights):
    mask = _pair_mask(labels)
    diff = scores[:, None] - scores[None, :]
    w = np.where(mask, weights, 0.0)
    value = float(np.sum(w * _softplus(-diff)))
    coef = w * _sigmoid(-diff)
    grad = coef.sum(axis=0) - coef.sum(axis=1)
    return value, grad


def logistic(labels, scores, option):
    return _weighted_logistic(labels, scores, 1.0)


def swap_weights(labels, scores):
    """Matrix of |delta NDCG| for swapping every pair under the score ranking."""
    n = labels.shape[0]
    positions = np.empty(n, dtype=np.float64)
    positions[descending_order(scores)] = np.arange(1, n + 1)
    gain = (np.exp2(labels) - 1.0) / max_dcg(labels)
    inv_disc = 1.0 / np.log1p(positions)
    return np.abs(gain[:, None] - gain[None, :]) * np.abs(inv_disc[:, None] - inv_disc[None, :])


def lambdarank(labels, scores, option):
    return _weighted_logistic(labels, scores, swap_weights(labels, scores))


def listnet(labels, scores, option):
    target = np.exp(labels - labels.max())
    target /= target.sum()
    log_p = scores - _logsumexp(scores)
    value = float(-np.sum(target * log_p))
    return value, np.exp(log_p) - target


def listmle(labels, scores, option):
    order = descending_order(labels)
    s = scores[order]
    # suffix log-sum-exp: lse[r] = log sum_{t >= r} exp(s[t])
    lse = np.logaddexp.accumulate(s[::-1])[::-1]
    value = float(np.sum(lse - s))
    n = s.shape[0]
    later = np.triu(np.ones((n, n), dtype=bool))
    stage_probs = np.where(later, np.exp(np.minimum(s[None, :] - lse[:, None], 0.0)), 0.0)
    sorted_grad = stage_probs.sum(axis=0) - 1.0
    grad = np.empty(n, dtype=np.float64)
    grad[order] = sorted_grad
    return value, grad


def approx_positions(scores, temperature):
    z = (scores[:, None] - scores[None, :]) / temperature
    below = _sigmoid(-z)
    np.fill_diagonal(below, 0.0)
    return 1.0 + below.sum(axis=1)


def approx_ndcg(labels, scores, temperature):
    z = (scores[:, None] - scores[None, :]) / temperature
    sig = _sigmoid(-z)
    np.fill_diagonal(sig, 0.0)
    pos = 1.0 + sig.sum(axis=1)
    gain = (np.exp2(labels) - 1.0) / max_dcg(labels)
    log_pos = np.log1p(pos)
    value = float(1.0 - np.sum(gain / log_pos))
    coef = gain / (log_pos * log_pos * (1.0 + pos))
    w = sig * (1.0 - sig)
    grad = (w @ coef - coef * w.sum(axis=1)) / temperature
    return value, grad


KERNELS = (hinge, logistic, lambdarank, listnet, listmle, approx_ndcg)


def batch_loss(kind, labels, scores, offsets, option):
    fn = KERNELS[kind]
    n_queries = offsets.shape[0] - 1
    values = np.empty(n_queries, dtype=np.float64)
    grad = np.empty_like(scores)
    for q in range(n_queries):
        a, b = offsets[q], offsets[q + 1]
        values[q], grad[a:b] = fn(labels[a:b], scores[a:b], option)
    return values, grad
