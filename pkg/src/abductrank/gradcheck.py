"""Central finite-difference checks of the analytic loss and scorer gradients.

Relative error is measured norm-wise:
``max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-8)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import LOSS_KINDS, LossSpec, batch_evaluate
from .scorer import forward_features, score_backward

STEP = 1e-6
TOLERANCE = 1e-5
HINGE_KINK = 1e-4
SIZES = tuple(range(2, 9))


def relative_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), 1e-8)
    return float(np.abs(a - n).max(initial=0.0) / scale)


def numeric_loss_grad(spec: LossSpec, labels, scores, step=STEP) -> np.ndarray:
    """Central differences of the loss value, all coordinates in one batch call."""
    n = scores.shape[0]
    bumps = np.repeat(scores[None, :], 2 * n, axis=0)
    idx = np.arange(n)
    bumps[2 * idx, idx] += step
    bumps[2 * idx + 1, idx] -= step
    offsets = np.arange(0, 2 * n * n + 1, n)
    values, _ = batch_evaluate(spec, np.tile(labels, 2 * n), bumps.reshape(-1), offsets)
    return (values[0::2] - values[1::2]) / (2 * step)


def near_hinge_kink(labels, scores, tol=HINGE_KINK) -> bool:
    diff = scores[:, None] - scores[None, :]
    mask = labels[:, None] > labels[None, :]
    return bool(np.any(mask & (np.abs(diff - 1.0) < tol)))


def random_case(spec: LossSpec, n: int, rng, levels: int = 4):
    """Random labels on a ``levels+1``-point grid in [0, 1] and normal scores.

    Resamples until the labels are usable under ``spec``.
    """
    while True:
        labels = rng.integers(0, levels + 1, n) / levels
        if spec.accepts(labels):
            break
    scores = rng.normal(0.0, 2.0, n)
    return labels, scores


@dataclass(frozen=True)
class CheckRow:
    kind: str
    n: int
    cases: int
    excluded: int
    max_rel_error: float
    passed: bool

    def format(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{self.kind:<22} N={self.n}  cases={self.cases:<4} excluded={self.excluded:<3} "
            f"max_rel_err={self.max_rel_error:.3e}  {status}"
        )


def check_loss(spec: LossSpec, n: int, cases: int = 100, seed: int = 0,
               step=STEP, tol=TOLERANCE) -> CheckRow:
    rng = np.random.default_rng([seed, n, LOSS_KINDS.index(spec.kind)])
    worst = 0.0
    done = excluded = 0
    while done < cases:
        labels, scores = random_case(spec, n, rng)
        if spec.kind == "hinge" and near_hinge_kink(labels, scores):
            excluded += 1
            continue
        _, grad = batch_evaluate(spec, labels, scores, np.array([0, n]))
        worst = max(worst, relative_error(grad, numeric_loss_grad(spec, labels, scores, step)))
        done += 1
    return CheckRow(spec.kind, n, cases, excluded, worst, worst < tol)


def run_suite(kinds=LOSS_KINDS, sizes=SIZES, cases=100, seed=0) -> list[CheckRow]:
    """Every loss kind at every size; binary_classification only at N=2."""
    rows = []
    for kind in kinds:
        spec = LossSpec(kind)
        for n in sizes:
            if kind == "binary_classification" and n != 2:
                continue
            rows.append(check_loss(spec, n, cases, seed))
    return rows


def model_gradient_error(model, features, labels, spec: LossSpec, coords=None, step=STEP):
    """Relative error of d(loss)/d(params) through the scorer for one query.

    ``coords`` limits the finite-difference sweep to a subset of parameters;
    the error is still normalized by the full analytic gradient.
    """
    offsets = np.array([0, features.shape[0]])

    def loss_at(params):
        s, _ = forward_features(model.with_params(params), features)
        return batch_evaluate(spec, labels, s, offsets)[0][0]

    scores, cache = forward_features(model, features)
    _, g = batch_evaluate(spec, labels, scores, offsets)
    analytic = score_backward(model, cache, g)
    if coords is None:
        coords = np.arange(model.params.shape[0])
    numeric = np.empty(len(coords))
    for i, c in enumerate(coords):
        up = model.params.copy()
        down = model.params.copy()
        up[c] += step
        down[c] -= step
        numeric[i] = (loss_at(up) - loss_at(down)) / (2 * step)
    # scale by the whole analytic gradient: a sampled subset can be tiny
    err = np.abs(analytic[coords] - numeric).max(initial=0.0)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
    return float(err / scale)
