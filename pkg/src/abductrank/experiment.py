"""Desk-scale comparison of every loss on synthetic corpora.

Each seed generates a fresh corpus, trains the ``linear`` scorer once per loss
with identical hyperparameters, and measures test binary accuracy and the
share of gold-side pair probabilities in the extreme bins [0, 0.1) and
(0.9, 1]. The classification baseline trains on the raw pairs, the ranking
losses on the merged lists.

    python -m abductrank.experiment [--seeds 10]
"""

from __future__ import annotations

import argparse
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .evaluate import binary_accuracy, margin_histogram
from .losses import LISTWISE, LOSS_KINDS, PAIRWISE, LossSpec
from .scorer import FeatureConfig, init_model
from .synthetic import generate_corpus
from .train import TrainConfig, train


@dataclass(frozen=True)
class ExperimentConfig:
    # tuned once on the classification baseline, then shared by every loss
    learning_rate: float = 0.05
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 8
    ngram_orders: tuple = (1,)
    dim: int = 2**14
    n_queries: int = 500
    n_range: tuple = (4, 16)
    bins: int = 20


def extreme_mass(hist) -> float:
    """Histogram mass in [0, 0.1) plus (0.9, 1]; needs edges on a 0.1 grid."""
    lo = hist.edges[:-1]
    hi = hist.edges[1:]
    sel = (hi <= 0.1 + 1e-12) | (lo >= 0.9 - 1e-12)
    return float(hist.frequencies[sel].sum())


@dataclass
class ExperimentResult:
    accuracy: dict = field(default_factory=dict)  # loss -> list over seeds
    extreme: dict = field(default_factory=dict)
    histograms: dict = field(default_factory=dict)  # loss -> histograms over seeds
    corpora: list = field(default_factory=list)
    seconds: float = 0.0

    def mean_accuracy(self, kind):
        return float(np.mean(self.accuracy[kind]))

    def mean_extreme(self, kind):
        return float(np.mean(self.extreme[kind]))

    def best(self, kinds):
        return max(kinds, key=self.mean_accuracy)

    def summary(self):
        return {
            k: {"accuracy": self.mean_accuracy(k), "extreme_mass": self.mean_extreme(k)}
            for k in self.accuracy
        }


def run(seeds=range(10), kinds=LOSS_KINDS, config: ExperimentConfig = ExperimentConfig()):
    t0 = time.perf_counter()
    out = ExperimentResult()
    for seed in seeds:
        corpus = generate_corpus(config.n_queries, config.n_range, seed=seed)
        out.corpora.append(corpus)
        features = FeatureConfig(config.ngram_orders, config.dim, seed)
        for kind in kinds:
            data = corpus.classification_lists if kind == "binary_classification" else corpus.train_lists
            tc = TrainConfig(
                LossSpec(kind),
                learning_rate=config.learning_rate,
                batch_size=config.batch_size,
                max_epochs=config.max_epochs,
                patience=config.patience,
                seed=seed,
            )
            model, _, _ = train(init_model("linear", features, seed=seed), data, corpus.dev_pairs, tc)
            hist = margin_histogram(model, corpus.test_pairs, config.bins)
            out.accuracy.setdefault(kind, []).append(binary_accuracy(model, corpus.test_pairs))
            out.extreme.setdefault(kind, []).append(extreme_mass(hist))
            out.histograms.setdefault(kind, []).append(hist)
    out.seconds = time.perf_counter() - t0
    return out


def directional_checks(result: ExperimentResult, slack=0.01, margin=0.15):
    """(name, passed, detail) rows for the three ranking-vs-classification checks."""
    base = result.mean_accuracy("binary_classification")
    ranking = [k for k in result.accuracy if k != "binary_classification"]
    worst = min(ranking, key=result.mean_accuracy)
    bp = result.best([k for k in PAIRWISE if k in result.accuracy])
    bl = result.best([k for k in LISTWISE if k in result.accuracy])
    lowest = min(result.accuracy, key=result.mean_accuracy)
    return [
        ("every ranking loss >= classification - 0.01",
         all(result.mean_accuracy(k) >= base - slack for k in ranking),
         f"worst {worst}={result.mean_accuracy(worst):.4f} baseline={base:.4f}"),
        ("best listwise >= best pairwise - 0.01",
         result.mean_accuracy(bl) >= result.mean_accuracy(bp) - slack,
         f"{bl}={result.mean_accuracy(bl):.4f} {bp}={result.mean_accuracy(bp):.4f}"),
        ("every model >= 0.5 + 0.15",
         all(result.mean_accuracy(k) >= 0.5 + margin for k in result.accuracy),
         f"lowest {lowest}={result.mean_accuracy(lowest):.4f}"),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(prog="python -m abductrank.experiment", description=__doc__.split("\n")[0])
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args(argv)
    result = run(range(args.seeds))
    for kind, row in result.summary().items():
        print(json.dumps({"loss": kind, **row}))
    for name, ok, detail in directional_checks(result):
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
    print(f"seconds: {result.seconds:.1f}")


if __name__ == "__main__":
    main()
