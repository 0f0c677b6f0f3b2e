"""Synthetic abductive corpora with a planted linear plausibility model.

Every hypothesis is a bag of words drawn from a vocabulary whose words carry
hidden weights; its latent score ``u`` is the sum of its word weights and its
plausibility is ``p = sigmoid(scale * u + bias)``. Each hypothesis occurs in
``occurrences`` crowd judgments, each independently marking it plausible with
probability ``p``. Binary-choice records pair an occurrence judged plausible
(the gold side) with one judged implausible from the same observation pair,
as in crowd-built abductive data. Merging these records with the real ingest
path yields labels that are observed plausible fractions.

Training queries whose merged list would fall outside ``n_range`` are
redrawn. Held-out dev/test pairs are built the same way from fresh
observation pairs, one record per pair.

    python -m abductrank.synthetic OUT_DIR [--queries 500] [--seed 0]
"""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import BinaryChoiceInstance
from .ingest import merge_to_ranking, pairs_as_lists, write_ranking


@dataclass
class SyntheticCorpus:
    train_pairs: list
    train_lists: list
    dev_pairs: list
    test_pairs: list
    word_weights: dict
    plausibility: dict  # (story_id, hypothesis text) -> planted probability

    @property
    def classification_lists(self):
        return pairs_as_lists(self.train_pairs)


class _Generator:
    def __init__(self, rng, n_words, n_obs_words, hyp_len, obs_len, scale, bias, occurrences):
        self.rng = rng
        self.words = [f"w{i:04d}" for i in range(n_words)]
        self.weights = rng.normal(0.0, 1.0, n_words)
        self.obs_words = [f"o{i:04d}" for i in range(n_obs_words)]
        self.hyp_len = hyp_len
        self.obs_len = obs_len
        self.scale = scale
        self.bias = bias
        self.occurrences = occurrences
        self.plausibility = {}

    def _sentence(self, vocab, k):
        return " ".join(vocab[i] for i in self.rng.choice(len(vocab), k, replace=False))

    def query(self, sid, n_hyp):
        """Observations and ``n_hyp`` distinct hypotheses with plausibilities."""
        obs1 = self._sentence(self.obs_words, self.obs_len)
        obs2 = self._sentence(self.obs_words, self.obs_len)
        hyps = {}
        while len(hyps) < n_hyp:
            idx = self.rng.choice(len(self.words), self.hyp_len, replace=False)
            text = " ".join(self.words[i] for i in idx)
            u = float(self.weights[idx].sum())
            hyps[text] = 1.0 / (1.0 + np.exp(-(self.scale * u + self.bias)))
        for text, p in hyps.items():
            self.plausibility[(sid, text)] = p
        return obs1, obs2, hyps

    def record(self, sid, obs1, obs2, good, bad):
        if self.rng.random() < 0.5:
            return BinaryChoiceInstance(sid, obs1, obs2, good, bad, 1)
        return BinaryChoiceInstance(sid, obs1, obs2, bad, good, 2)

    def pairs(self, sid, n_hyp, occurrences):
        obs1, obs2, hyps = self.query(sid, n_hyp)
        good, bad = [], []
        for text, p in hyps.items():
            for _ in range(occurrences):
                (good if self.rng.random() < p else bad).append(text)
        good = [good[i] for i in self.rng.permutation(len(good))]
        bad = [bad[i] for i in self.rng.permutation(len(bad))]
        out = []
        used = set()
        # pair judgments across the two sides, skipping self-pairs
        for g in good:
            for k, b in enumerate(bad):
                if k not in used and b != g:
                    used.add(k)
                    out.append(self.record(sid, obs1, obs2, g, b))
                    break
        return out


def generate_corpus(
    n_queries=500,
    n_range=(4, 16),
    seed=0,
    scale=1.0,
    bias=-1.0,
    occurrences=3,
    n_dev=1000,
    n_test=2000,
    n_words=1000,
    n_obs_words=300,
    hyp_len=5,
    obs_len=8,
) -> SyntheticCorpus:
    """Train lists from ``n_queries`` observation pairs plus held-out dev/test pairs."""
    rng = np.random.default_rng(seed)
    gen = _Generator(rng, n_words, n_obs_words, hyp_len, obs_len, scale, bias, occurrences)
    lo, hi = n_range
    train_pairs = []
    q = kept = 0
    while kept < n_queries:
        recs = gen.pairs(f"train-{q:05d}", int(rng.integers(lo, hi + 1)), occurrences)
        q += 1
        # unpaired hypotheses drop out of the merged list; keep N within range
        if lo <= len({h for r in recs for h in (r.hyp1, r.hyp2)}) <= hi:
            train_pairs += recs
            kept += 1

    def held_out(prefix, count):
        out = []
        q = 0
        while len(out) < count:
            sid = f"{prefix}-{q:05d}"
            q += 1
            recs = gen.pairs(sid, int(rng.integers(lo, hi + 1)), 1)
            if recs:
                out.append(recs[int(rng.integers(len(recs)))])
        return out

    dev = held_out("dev", n_dev)
    test = held_out("test", n_test)
    return SyntheticCorpus(
        train_pairs=train_pairs,
        train_lists=merge_to_ranking(train_pairs),
        dev_pairs=dev,
        test_pairs=test,
        word_weights=dict(zip(gen.words, gen.weights.tolist())),
        plausibility=gen.plausibility,
    )


def _write_pairs(pairs, path):
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            rec = {"story_id": p.story_id, "obs1": p.obs1, "obs2": p.obs2,
                   "hyp1": p.hyp1, "hyp2": p.hyp2, "label": p.correct}
            fh.write(json.dumps(rec) + "\n")


def main(argv=None):
    ap = argparse.ArgumentParser(prog="python -m abductrank.synthetic", description=__doc__.split("\n")[0])
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--queries", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--occurrences", type=int, default=3)
    args = ap.parse_args(argv)
    corpus = generate_corpus(args.queries, seed=args.seed, occurrences=args.occurrences)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    _write_pairs(corpus.train_pairs, args.out_dir / "train_pairs.jsonl")
    _write_pairs(corpus.dev_pairs, args.out_dir / "dev_pairs.jsonl")
    _write_pairs(corpus.test_pairs, args.out_dir / "test_pairs.jsonl")
    write_ranking(corpus.train_lists, args.out_dir / "train_ranking.jsonl")
    write_ranking(corpus.classification_lists, args.out_dir / "train_binary_lists.jsonl")


if __name__ == "__main__":
    main()
