"""Per-query ranking losses with analytic gradients.

All losses are sums over pairs or positions for one query (no per-query
averaging). The ListNet loss is the top-one cross-entropy
``-sum softmax(y) * log softmax(s)``; it differs from the KL divergence only by
the entropy of ``softmax(y)``, so the gradients coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import (
    ConfigError,
    LossResult,
    UntrainableQueryError,
    _as_labels,
    _as_scores,
    max_dcg,
)

LOSS_KINDS = (
    "hinge",
    "logistic",
    "lambdarank",
    "listnet_kld",
    "listmle",
    "approx_ndcg",
    "binary_classification",
)
PAIRWISE = ("hinge", "logistic", "lambdarank")
LISTWISE = ("listnet_kld", "listmle", "approx_ndcg")

_KERNEL_CODE = {
    "hinge": kernels.HINGE,
    "logistic": kernels.LOGISTIC,
    "lambdarank": kernels.LAMBDARANK,
    "listnet_kld": kernels.LISTNET,
    "listmle": kernels.LISTMLE,
    "approx_ndcg": kernels.APPROX_NDCG,
    "binary_classification": kernels.LOGISTIC,
}
_OPTIONS = {"approx_ndcg": {"temperature": 1.0}}


@dataclass(frozen=True)
class LossSpec:
    kind: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(
                f"unknown loss {self.kind!r}; expected one of {', '.join(LOSS_KINDS)}"
            )
        allowed = _OPTIONS.get(self.kind, {})
        unknown = set(self.options) - set(allowed)
        if unknown:
            raise ConfigError(f"loss {self.kind!r} takes no option(s) {sorted(unknown)}")
        merged = {**allowed, **{k: float(v) for k, v in self.options.items()}}
        if merged.get("temperature", 1.0) <= 0:
            raise ConfigError("temperature must be > 0")
        object.__setattr__(self, "options", merged)

    @classmethod
    def parse(cls, name: str, **options) -> "LossSpec":
        return cls(name.strip().lower(), options)

    @property
    def kernel_code(self) -> int:
        return _KERNEL_CODE[self.kind]

    @property
    def kernel_option(self) -> float:
        return self.options.get("temperature", 1.0)

    @property
    def needs_gain(self) -> bool:
        return self.kind in ("lambdarank", "approx_ndcg")

    def check(self, labels) -> None:
        """Raise if ``labels`` cannot be trained on under this loss."""
        y = np.asarray(labels, dtype=np.float64)
        n = y.shape[0]
        if self.kind == "binary_classification":
            if n != 2:
                raise ConfigError(f"binary_classification needs N=2, got N={n}")
            if y[0] == y[1]:
                raise UntrainableQueryError("binary_classification needs distinct labels")
            return
        if n < 2:
            raise UntrainableQueryError(f"need at least 2 hypotheses, got {n}")
        if self.kind in PAIRWISE and not np.ptp(y) > 0:
            raise UntrainableQueryError("untrainable query: no pair with y_j > y_k")
        if self.needs_gain and max_dcg(y) <= 0:
            raise UntrainableQueryError("all labels are zero; maxDCG undefined")

    def accepts(self, labels) -> bool:
        try:
            self.check(labels)
        except ConfigError:
            return False
        return True


def _run(spec: LossSpec, labels, scores) -> LossResult:
    y = _as_labels(labels)
    s = _as_scores(scores)
    if y.shape != s.shape:
        raise ConfigError(f"{y.shape[0]} labels vs {s.shape[0]} scores")
    spec.check(y)
    values, grad = kernels.batch_loss(
        _KERNEL_CODE[spec.kind], y, s, np.array([0, y.shape[0]]), spec.kernel_option
    )
    return LossResult(float(values[0]), grad)


def pairwise_hinge(labels, scores) -> LossResult:
    """Sum of ``max(0, 1 - (s_j - s_k))`` over pairs with ``y_j > y_k``."""
    return _run(LossSpec("hinge"), labels, scores)


def pairwise_logistic(labels, scores) -> LossResult:
    return _run(LossSpec("logistic"), labels, scores)


def lambdarank(labels, scores) -> LossResult:
    """Logistic pair loss weighted by |delta NDCG| under the current ranking.

    The swap weights are treated as constants when differentiating.
    """
    return _run(LossSpec("lambdarank"), labels, scores)


def listnet_kld(labels, scores) -> LossResult:
    return _run(LossSpec("listnet_kld"), labels, scores)


def listmle(labels, scores) -> LossResult:
    """Plackett-Luce negative log-likelihood of the label-sorted permutation.

    Tied labels are ordered by ascending index.
    """
    return _run(LossSpec("listmle"), labels, scores)


def approx_ndcg_loss(labels, scores, temperature: float = 1.0) -> LossResult:
    return _run(LossSpec("approx_ndcg", {"temperature": temperature}), labels, scores)


def binary_classification(labels, scores) -> LossResult:
    return _run(LossSpec("binary_classification"), labels, scores)


def evaluate_loss(spec: LossSpec, labels, scores) -> LossResult:
    if not isinstance(spec, LossSpec):
        spec = LossSpec.parse(str(spec))
    return _run(spec, labels, scores)


def batch_evaluate(spec: LossSpec, labels, scores, offsets):
    """Vectorized form for training: per-query values and concatenated grad.

    Callers are responsible for having filtered queries with ``spec.accepts``.
    """
    return kernels.batch_loss(
        _KERNEL_CODE[spec.kind], labels, scores, offsets, spec.kernel_option
    )
