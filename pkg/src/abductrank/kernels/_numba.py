"""Loop-based numba ports of the loss kernels in ``_numpy``.

Each ``_<name>`` writes the gradient into ``out`` and returns the loss value.
``batch_loss`` walks a ragged batch described by ``offsets``.
"""

import functools
import math

import numpy as np
import numba as nb

njit = functools.partial(nb.njit, cache=True, nogil=True)


@njit
def _sigmoid(x):
    return 0.5 * (1.0 + math.tanh(0.5 * x))


@njit
def _softplus(x):
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


@njit
def descending_order(values):
    return np.argsort(-values, kind="mergesort")


@njit
def max_dcg(labels):
    srt = np.sort(labels)
    n = srt.shape[0]
    total = 0.0
    for r in range(n):
        total += (2.0 ** srt[n - 1 - r] - 1.0) / math.log(2.0 + r)
    return total


@njit
def _hinge(labels, scores, option, out):
    n = labels.shape[0]
    value = 0.0
    out[:] = 0.0
    for j in range(n):
        for k in range(n):
            if labels[j] > labels[k]:
                margin = 1.0 - (scores[j] - scores[k])
                if margin > 0.0:
                    value += margin
                    out[j] -= 1.0
                    out[k] += 1.0
    return value


@njit
def _logistic(labels, scores, option, out):
    n = labels.shape[0]
    value = 0.0
    out[:] = 0.0
    for j in range(n):
        for k in range(n):
            if labels[j] > labels[k]:
                d = scores[j] - scores[k]
                value += _softplus(-d)
                c = _sigmoid(-d)
                out[j] -= c
                out[k] += c
    return value


@njit
def _lambdarank(labels, scores, option, out):
    n = labels.shape[0]
    order = descending_order(scores)
    inv_disc = np.empty(n)
    for r in range(n):
        inv_disc[order[r]] = 1.0 / math.log(2.0 + r)
    norm = max_dcg(labels)
    value = 0.0
    out[:] = 0.0
    for j in range(n):
        gj = (2.0 ** labels[j] - 1.0) / norm
        for k in range(n):
            if labels[j] > labels[k]:
                gk = (2.0 ** labels[k] - 1.0) / norm
                w = abs(gj - gk) * abs(inv_disc[j] - inv_disc[k])
                d = scores[j] - scores[k]
                value += w * _softplus(-d)
                c = w * _sigmoid(-d)
                out[j] -= c
                out[k] += c
    return value


@njit
def _listnet(labels, scores, option, out):
    n = labels.shape[0]
    ymax = labels.max()
    smax = scores.max()
    ysum = 0.0
    ssum = 0.0
    for j in range(n):
        ysum += math.exp(labels[j] - ymax)
        ssum += math.exp(scores[j] - smax)
    lse = smax + math.log(ssum)
    value = 0.0
    for j in range(n):
        t = math.exp(labels[j] - ymax) / ysum
        log_p = scores[j] - lse
        value -= t * log_p
        out[j] = math.exp(log_p) - t
    return value


@njit
def _listmle(labels, scores, option, out):
    n = labels.shape[0]
    order = descending_order(labels)
    lse = np.empty(n)
    acc = -np.inf
    for r in range(n - 1, -1, -1):
        x = scores[order[r]]
        hi = max(acc, x)
        acc = hi + math.log(math.exp(acc - hi) + math.exp(x - hi))
        lse[r] = acc
    value = 0.0
    for t in range(n):
        st = scores[order[t]]
        value += lse[t] - st
        g = -1.0
        for r in range(t + 1):
            g += math.exp(min(st - lse[r], 0.0))
        out[order[t]] = g
    return value


@njit
def _approx_ndcg(labels, scores, temperature, out):
    n = labels.shape[0]
    norm = max_dcg(labels)
    pos = np.ones(n)
    for j in range(n):
        for u in range(n):
            if u != j:
                pos[j] += _sigmoid(-(scores[j] - scores[u]) / temperature)
    coef = np.empty(n)
    value = 1.0
    for j in range(n):
        g = (2.0 ** labels[j] - 1.0) / norm
        lp = math.log1p(pos[j])
        value -= g / lp
        coef[j] = g / (lp * lp * (1.0 + pos[j]))
    for m in range(n):
        acc = 0.0
        for u in range(n):
            if u != m:
                sg = _sigmoid(-(scores[m] - scores[u]) / temperature)
                w = sg * (1.0 - sg)
                acc += w * (coef[u] - coef[m])
        out[m] = acc / temperature
    return value


@njit
def _dispatch(kind, labels, scores, option, out):
    if kind == 0:
        return _hinge(labels, scores, option, out)
    elif kind == 1:
        return _logistic(labels, scores, option, out)
    elif kind == 2:
        return _lambdarank(labels, scores, option, out)
    elif kind == 3:
        return _listnet(labels, scores, option, out)
    elif kind == 4:
        return _listmle(labels, scores, option, out)
    return _approx_ndcg(labels, scores, option, out)


@njit
def batch_loss(kind, labels, scores, offsets, option):
    n_queries = offsets.shape[0] - 1
    values = np.empty(n_queries)
    grad = np.empty_like(scores)
    for q in range(n_queries):
        a = offsets[q]
        b = offsets[q + 1]
        values[q] = _dispatch(kind, labels[a:b], scores[a:b], option, grad[a:b])
    return values, grad
