"""Inference and metrics: argmax prediction, binary-choice accuracy, NDCG@k
and the distribution of two-way softmax probabilities on gold hypotheses."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .core import DataError, RankingInstance, UntrainableQueryError, gain, normalize_text
from .scorer import ScorerModel, feature_matrix, forward_features

logger = logging.getLogger(__name__)


def pair_as_list(pair) -> RankingInstance:
    """Two-item list with the gold hypothesis first."""
    return RankingInstance(
        pair.story_id, normalize_text(pair.obs1), normalize_text(pair.obs2),
        (normalize_text(pair.gold), normalize_text(pair.other)), (1.0, 0.0),
    )


class PairBatch:
    """Binary pairs featurized once, for repeated accuracy checks during training."""

    def __init__(self, pairs, feature_config):
        if not pairs:
            raise DataError("empty pair set")
        self.features = feature_matrix([pair_as_list(p) for p in pairs], feature_config)

    def accuracy(self, model: ScorerModel) -> float:
        s, _ = forward_features(model, self.features)
        return float(np.mean(s[0::2] > s[1::2]))


def _scores_for(scorer, instances):
    if hasattr(scorer, "score_many"):
        return scorer.score_many(instances)
    return [np.asarray(scorer(inst), dtype=np.float64) for inst in instances]


def pair_scores(scorer, pairs):
    """(gold scores, other scores) for a list of binary-choice instances."""
    if not pairs:
        raise DataError("empty pair set")
    scores = np.array(_scores_for(scorer, [pair_as_list(p) for p in pairs]))
    return scores[:, 0], scores[:, 1]


def predict(scorer, instance: RankingInstance) -> int:
    """0-based index of the highest-scoring hypothesis (lowest index on ties)."""
    s = _scores_for(scorer, [instance])[0]
    return int(np.argmax(s))


def binary_accuracy(scorer, pairs) -> float:
    """Fraction of pairs whose gold hypothesis scores strictly higher; ties are wrong."""
    gold, other = pair_scores(scorer, pairs)
    return float(np.mean(gold > other))


def _dcg_at_k(labels, order, k):
    top = order[:k]
    return float(np.sum(gain(labels[top]) / np.log1p(np.arange(1, top.shape[0] + 1))))


def ndcg_at_k(scorer, dataset, k: int, return_counts: bool = False):
    """Mean NDCG truncated at ``k`` over queries with a positive ideal DCG."""
    if k < 1:
        raise DataError("k must be >= 1")
    values = []
    skipped = 0
    for inst, s in zip(dataset, _scores_for(scorer, dataset)):
        y = inst.labels
        ideal = _dcg_at_k(y, np.argsort(-y, kind="mergesort"), k)
        if ideal <= 0:
            skipped += 1
            continue
        values.append(_dcg_at_k(y, np.argsort(-np.asarray(s), kind="mergesort"), k) / ideal)
    if skipped:
        logger.warning("ndcg@%d: skipped %d queries with zero ideal DCG", k, skipped)
    if not values:
        raise UntrainableQueryError("every query has zero ideal DCG")
    mean = float(np.mean(values))
    return (mean, len(values), skipped) if return_counts else mean


def pair_probability(gold_score, other_score):
    """Two-way softmax probability on the gold hypothesis."""
    d = np.asarray(gold_score, dtype=np.float64) - np.asarray(other_score, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(0.5 * d))


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    frequencies: np.ndarray
    n: int

    def to_tsv(self) -> str:
        rows = ["bin_left\tbin_right\tfrequency"]
        for lo, hi, f in zip(self.edges[:-1], self.edges[1:], self.frequencies):
            rows.append(f"{float(lo)!r}\t{float(hi)!r}\t{float(f)!r}")
        return "\n".join(rows) + "\n"


def gold_probabilities(scorer, pairs) -> np.ndarray:
    gold, other = pair_scores(scorer, pairs)
    return pair_probability(gold, other)


def margin_histogram(scorer, pairs, bins: int = 20) -> Histogram:
    """Normalized histogram on [0, 1] of gold-hypothesis pair probabilities.

    The last bin is closed on the right. Mass above 0.5 approximates
    binary accuracy up to the width of the bin containing 0.5.
    """
    if bins < 2:
        raise DataError("bins must be >= 2")
    p = gold_probabilities(scorer, pairs)
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(p, bins=edges)
    return Histogram(edges, counts / p.shape[0], int(p.shape[0]))


def metric_line(metric: str, value: float, n: int) -> str:
    return json.dumps({"metric": metric, "value": value, "n": n})
