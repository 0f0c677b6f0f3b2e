"""Empirical-risk minimization with Adam and dev-accuracy early stopping."""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from ._fileio import atomic_write_text
from .core import ConfigError, NumericalError, UntrainableQueryError
from .evaluate import PairBatch
from .losses import LossSpec, batch_evaluate
from .scorer import ScorerModel, feature_matrix, forward_features, offsets_of, score_backward

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    loss: LossSpec
    learning_rate: float = 4e-4
    batch_size: int = 32
    max_epochs: int = 64
    patience: int = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not isinstance(self.loss, LossSpec):
            object.__setattr__(self, "loss", LossSpec.parse(str(self.loss)))
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("Adam betas must lie in (0, 1)")
        if not self.eps > 0:
            raise ConfigError("Adam eps must be > 0")

    def as_dict(self):
        return {
            "loss": self.loss.kind,
            "loss_options": dict(self.loss.options),
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "seed": self.seed,
            "adam": [self.beta1, self.beta2, self.eps],
        }


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)

    def copy(self):
        return AdamState(self.m.copy(), self.v.copy(), self.t)


def adam_step(params, grads, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape:
        raise ConfigError(f"gradient shape {grads.shape} != params shape {params.shape}")
    if not np.all(np.isfinite(grads)):
        raise NumericalError("non-finite gradient passed to adam_step")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * (grads * grads)
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m, v, t)


def trainable_subset(dataset, spec: LossSpec):
    """Queries usable under ``spec``; an incompatible query type raises."""
    out = []
    for q in dataset:
        if not q.trainable:
            continue
        try:
            spec.check(q.labels)
        except UntrainableQueryError:
            continue
        out.append(q)
    return out


class _Packed:
    """Features, labels and offsets of a query list, computed once."""

    def __init__(self, queries, feature_config):
        self.queries = queries
        self.features = feature_matrix(queries, feature_config)
        self.labels = np.concatenate([q.labels for q in queries])
        self.offsets = offsets_of(queries)
        self.sizes = np.diff(self.offsets)

    def rows(self, batch):
        return np.concatenate([np.arange(self.offsets[q], self.offsets[q + 1]) for q in batch])


def _risk(model, packed, spec):
    scores, _ = forward_features(model, packed.features)
    values, _ = batch_evaluate(spec, packed.labels, scores, packed.offsets)
    return float(values.mean())


def empirical_risk(model: ScorerModel, dataset, spec: LossSpec) -> float:
    """Mean per-query loss over the queries trainable under ``spec``."""
    queries = trainable_subset(dataset, spec)
    if not queries:
        raise UntrainableQueryError(f"no trainable queries for loss {spec.kind!r}")
    return _risk(model, _Packed(queries, model.feature_config), spec)


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_dev_accuracy: float = float("-inf")
    stop_reason: str = ""
    config: dict = field(default_factory=dict)

    def to_jsonl(self) -> str:
        lines = [json.dumps(e, sort_keys=True) for e in self.epochs]
        lines.append(
            json.dumps(
                {
                    "summary": {
                        "best_epoch": self.best_epoch,
                        "best_dev_accuracy": self.best_dev_accuracy,
                        "stop_reason": self.stop_reason,
                        "config": self.config,
                    }
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"


def _check_grad(grad, values, offsets, packed, batch, spec):
    if np.all(np.isfinite(grad)) and np.all(np.isfinite(values)):
        return
    for i, q in enumerate(batch):
        a, b = offsets[i], offsets[i + 1]
        if not (np.isfinite(values[i]) and np.all(np.isfinite(grad[a:b]))):
            sid = packed.queries[q].story_id
            raise NumericalError(f"non-finite loss/gradient for query {sid!r} (loss {spec.kind})")
    raise NumericalError(f"non-finite parameter gradient (loss {spec.kind})")


def train(model: ScorerModel, train_set, dev_pairs, config: TrainConfig, dev_metric=None):
    """Train a copy of ``model``; return the best-dev snapshot, report and Adam state.

    ``dev_metric`` overrides the default binary-choice accuracy on
    ``dev_pairs``; it receives a model and returns a float.
    """
    spec = config.loss
    queries = trainable_subset(train_set, spec)
    if not queries:
        raise UntrainableQueryError(f"no trainable queries for loss {spec.kind!r}")
    packed = _Packed(queries, model.feature_config)
    if dev_metric is None:
        dev = PairBatch(dev_pairs, model.feature_config)
        dev_metric = dev.accuracy

    rng = np.random.default_rng(config.seed)
    params = model.params.copy()
    state = AdamState.zeros(params.shape[0])
    current = model.with_params(params)
    report = TrainReport(config=config.as_dict())
    best_params, best_state = params.copy(), state.copy()
    stale = 0
    m = len(queries)

    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(m)
        for start in range(0, m, config.batch_size):
            batch = perm[start:start + config.batch_size]
            rows = packed.rows(batch)
            offsets = np.concatenate([[0], np.cumsum(packed.sizes[batch])])
            scores, cache = forward_features(current, packed.features[rows])
            values, g = batch_evaluate(spec, packed.labels[rows], scores, offsets)
            _check_grad(g, values, offsets, packed, batch, spec)
            grad = score_backward(current, cache, g / len(batch))
            params, state = adam_step(
                params, grad, state, config.learning_rate, config.beta1, config.beta2, config.eps
            )
            current = model.with_params(params)

        risk = _risk(current, packed, spec)
        acc = float(dev_metric(current))
        improved = acc > report.best_dev_accuracy
        if improved:
            report.best_epoch, report.best_dev_accuracy = epoch, acc
            best_params, best_state = params.copy(), state.copy()
            stale = 0
        else:
            stale += 1
        report.epochs.append({"epoch": epoch, "train_risk": risk, "dev_accuracy": acc,
                              "best_dev_accuracy": report.best_dev_accuracy})
        logger.info("epoch %d risk %.6f dev acc %.4f", epoch, risk, acc)
        if stale >= config.patience:
            report.stop_reason = "patience"
            break
    else:
        report.stop_reason = "max_epochs"

    return model.with_params(best_params), report, best_state


def save_adam_state(state: AdamState, path) -> None:
    def enc(a):
        return base64.b64encode(a.astype("<f8").tobytes()).decode("ascii")

    doc = {"format": "abductrank-adam", "t": state.t, "m_b64": enc(state.m), "v_b64": enc(state.v)}
    atomic_write_text(path, json.dumps(doc, sort_keys=True) + "\n")


def load_adam_state(path) -> AdamState:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)

    def dec(s):
        return np.frombuffer(base64.b64decode(s), dtype="<f8").astype(np.float64)

    return AdamState(dec(doc["m_b64"]), dec(doc["v_b64"]), int(doc["t"]))
