"""Domain types and ranking primitives shared across the package.

Orders and positions are 0-based numpy index arrays: ``order[r]`` is the item
at rank ``r`` and the 1-based position of item ``j`` is ``inverse[j] + 1``.
Discounts use the natural logarithm, ``D(r) = ln(1 + r)`` with ``r`` 1-based.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np


class AbductRankError(Exception):
    """Base class for errors raised by this package."""


class DataError(AbductRankError, ValueError):
    """Malformed or invariant-violating input data."""

    def __init__(self, message, line=None):
        self.line = line
        self.detail = message
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(AbductRankError, ValueError):
    """Invalid configuration or an incompatible loss/instance combination."""


class UntrainableQueryError(ConfigError):
    """The query has no pair with differing labels (or no positive gain)."""


class NumericalError(AbductRankError, ArithmeticError):
    """Non-finite values encountered in scores or gradients."""


_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Trim and collapse internal whitespace runs; case is preserved."""
    return _WS.sub(" ", text).strip()


@dataclass(frozen=True)
class BinaryChoiceInstance:
    story_id: str
    obs1: str
    obs2: str
    hyp1: str
    hyp2: str
    correct: int  # 1 or 2

    def __post_init__(self):
        for name in ("obs1", "obs2", "hyp1", "hyp2"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise DataError(f"field {name!r} must be a non-empty string")
        if self.correct not in (1, 2) or isinstance(self.correct, bool):
            raise DataError(f"correct must be 1 or 2, got {self.correct!r}")
        if normalize_text(self.hyp1) == normalize_text(self.hyp2):
            raise DataError("hyp1 and hyp2 are identical after normalization")

    @property
    def gold(self) -> str:
        return self.hyp1 if self.correct == 1 else self.hyp2

    @property
    def other(self) -> str:
        return self.hyp2 if self.correct == 1 else self.hyp1


@dataclass(frozen=True, eq=False)
class RankingInstance:
    story_id: str
    obs1: str
    obs2: str
    hypotheses: tuple
    labels: np.ndarray
    trainable: bool = field(default=None)

    def __post_init__(self):
        hyps = tuple(self.hypotheses)
        labels = np.array(self.labels, dtype=np.float64).reshape(-1)
        labels.setflags(write=False)
        object.__setattr__(self, "hypotheses", hyps)
        object.__setattr__(self, "labels", labels)
        for name in ("obs1", "obs2"):
            if not isinstance(getattr(self, name), str) or not getattr(self, name).strip():
                raise DataError(f"field {name!r} must be a non-empty string")
        if len(hyps) < 2:
            raise DataError(f"a ranking list needs at least 2 hypotheses, got {len(hyps)}")
        if len(hyps) != labels.shape[0]:
            raise DataError(f"{len(hyps)} hypotheses but {labels.shape[0]} labels")
        if not np.all(np.isfinite(labels)) or np.any((labels < 0) | (labels > 1)):
            raise DataError("labels must lie in [0, 1]")
        normed = [normalize_text(h) for h in hyps]
        if any(not h for h in normed):
            raise DataError("empty hypothesis text")
        if len(set(normed)) != len(normed):
            raise DataError(f"duplicate hypothesis in query {self.story_id!r}")
        if self.trainable is None:
            object.__setattr__(self, "trainable", is_trainable(labels))

    def __len__(self):
        return len(self.hypotheses)

    def __eq__(self, other):
        if not isinstance(other, RankingInstance):
            return NotImplemented
        return (
            (self.story_id, self.obs1, self.obs2, self.hypotheses, self.trainable)
            == (other.story_id, other.obs1, other.obs2, other.hypotheses, other.trainable)
            and np.array_equal(self.labels, other.labels)
        )


def is_trainable(labels) -> bool:
    """A list can be trained on when it has at least two distinct labels."""
    labels = np.asarray(labels)
    return labels.shape[0] >= 2 and bool(np.ptp(labels) > 0)


@dataclass(frozen=True)
class LossResult:
    value: float
    grad: np.ndarray


def _as_scores(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(s)):
        bad = np.flatnonzero(~np.isfinite(s)).tolist()
        raise NumericalError(f"non-finite scores at indices {bad}")
    return s


def _as_labels(labels) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if y.shape[0] == 0:
        raise ConfigError("empty label list")
    return y


def rank_by_scores(scores) -> np.ndarray:
    """Return indices sorted by descending score, ties by ascending index."""
    s = _as_scores(scores)
    return np.argsort(-s, kind="mergesort")


def positions(order) -> np.ndarray:
    """1-based rank position of every item for an ``order`` array."""
    order = np.asarray(order)
    pos = np.empty(order.shape[0], dtype=np.int64)
    pos[order] = np.arange(1, order.shape[0] + 1)
    return pos


def gain(labels) -> np.ndarray:
    return np.exp2(np.asarray(labels, dtype=np.float64)) - 1.0


def discount(rank) -> np.ndarray:
    return np.log1p(np.asarray(rank, dtype=np.float64))


def dcg(labels, order) -> float:
    y = _as_labels(labels)
    order = np.asarray(order)
    return float(np.sum(gain(y[order]) / discount(np.arange(1, order.shape[0] + 1))))


def max_dcg(labels) -> float:
    """DCG of the label-descending ordering; 0 when every label is 0."""
    y = _as_labels(labels)
    return dcg(y, np.argsort(-y, kind="mergesort"))


def ndcg(labels, scores) -> float:
    y = _as_labels(labels)
    s = _as_scores(scores)
    if y.shape != s.shape:
        raise ConfigError(f"{y.shape[0]} labels vs {s.shape[0]} scores")
    ideal = max_dcg(y)
    if ideal <= 0:
        raise UntrainableQueryError("NDCG undefined: all labels are zero")
    return dcg(y, rank_by_scores(s)) / ideal


def delta_ndcg(labels, order, j: int, k: int) -> float:
    """|NDCG change| from swapping the rank positions of items ``j`` and ``k``."""
    if j == k:
        raise ConfigError("delta_ndcg needs two distinct items")
    y = _as_labels(labels)
    ideal = max_dcg(y)
    if ideal <= 0:
        raise UntrainableQueryError("delta NDCG undefined: all labels are zero")
    pos = positions(order)
    gj, gk = gain(y[[j, k]]) / ideal
    dj, dk = 1.0 / discount(pos[[j, k]])
    return abs(gj - gk) * abs(dj - dk)

