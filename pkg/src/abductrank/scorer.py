"""Scoring functions f(obs1, hyp, obs2) -> R.

Texts are featurized as a hashed bag of word n-grams over the segment-tagged
sequence ``[O1] obs1 [H] hyp [O2] obs2``. Each n-gram key also carries the
segment its first token belongs to, so swapping the roles of two texts changes
the vector even with unigrams only. Counts are L2-normalized.

Two differentiable heads are provided (``linear`` and ``mlp``) plus
``ExternalScorer`` which serves precomputed scores from a table file.
"""

from __future__ import annotations

import base64
import hashlib
import json
import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from ._fileio import atomic_write_text
from .core import ConfigError, DataError, NumericalError, RankingInstance, normalize_text

TOKEN_RE = re.compile(r"\w+|[^\w\s]")
SEGMENTS = ("[O1]", "[H]", "[O2]")
MODEL_FORMAT = "abductrank-model"


@dataclass(frozen=True)
class FeatureConfig:
    ngram_orders: tuple = (1, 2)
    dim: int = 2**18
    seed: int = 0

    def __post_init__(self):
        orders = tuple(int(n) for n in self.ngram_orders)
        object.__setattr__(self, "ngram_orders", orders)
        if not orders or min(orders) < 1:
            raise ConfigError("ngram_orders must be positive integers")
        if self.dim < 1:
            raise ConfigError("feature dim must be positive")

    def as_dict(self):
        return {"ngram_orders": list(self.ngram_orders), "dim": self.dim, "seed": self.seed}


def tokenize(text: str) -> list[str]:
    """Split on whitespace and punctuation; punctuation marks become tokens."""
    return TOKEN_RE.findall(text)


@lru_cache(maxsize=1 << 20)
def _bucket(key: str, seed: int, dim: int) -> int:
    h = hashlib.blake2b(
        key.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little", signed=True)
    )
    return int.from_bytes(h.digest(), "little") % dim


def _sparse_features(obs1, hyp, obs2, config):
    seq = []
    for tag, text in zip(SEGMENTS, (obs1, hyp, obs2)):
        if not isinstance(text, str) or not text.strip():
            raise DataError(f"cannot featurize empty text for segment {tag}")
        seq.append((tag, tag))
        seq.extend((tag, tok) for tok in tokenize(text))
    counts = {}
    for n in config.ngram_orders:
        for i in range(len(seq) - n + 1):
            gram = " ".join(tok for _, tok in seq[i:i + n])
            idx = _bucket(f"{seq[i][0]}|{n}|{gram}", config.seed, config.dim)
            counts[idx] = counts.get(idx, 0) + 1
    idx = np.fromiter(counts.keys(), dtype=np.int64, count=len(counts))
    val = np.fromiter(counts.values(), dtype=np.float64, count=len(counts))
    order = np.argsort(idx)
    idx, val = idx[order], val[order]
    return idx, val / np.linalg.norm(val)


def featurize(obs1: str, hyp: str, obs2: str, config: FeatureConfig) -> np.ndarray:
    """Dense unit-norm feature vector of length ``config.dim``."""
    idx, val = _sparse_features(obs1, hyp, obs2, config)
    out = np.zeros(config.dim, dtype=np.float64)
    out[idx] = val
    return out


def feature_matrix(instances, config: FeatureConfig) -> sp.csr_matrix:
    """Stack the feature rows of every hypothesis of every instance (in order)."""
    indptr = [0]
    indices = []
    data = []
    for inst in instances:
        for hyp in inst.hypotheses:
            idx, val = _sparse_features(inst.obs1, hyp, inst.obs2, config)
            indices.append(idx)
            data.append(val)
            indptr.append(indptr[-1] + idx.shape[0])
    n_rows = len(indptr) - 1
    if n_rows == 0:
        return sp.csr_matrix((0, config.dim))
    return sp.csr_matrix(
        (np.concatenate(data), np.concatenate(indices), np.asarray(indptr)),
        shape=(n_rows, config.dim),
    )


def offsets_of(instances) -> np.ndarray:
    return np.concatenate([[0], np.cumsum([len(q) for q in instances])]).astype(np.int64)


@dataclass
class ScorerModel:
    kind: str
    feature_config: FeatureConfig
    params: np.ndarray
    hidden_dim: int = 0

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise ConfigError(f"unknown scorer kind {self.kind!r}")
        if self.kind == "mlp" and self.hidden_dim < 1:
            raise ConfigError("mlp scorer needs hidden_dim >= 1")
        if self.kind == "linear":
            self.hidden_dim = 0
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        expected = n_params(self.kind, self.feature_config.dim, self.hidden_dim)
        if self.params.shape != (expected,):
            raise ConfigError(f"expected {expected} parameters, got {self.params.shape}")

    def copy(self) -> "ScorerModel":
        return ScorerModel(self.kind, self.feature_config, self.params.copy(), self.hidden_dim)

    def with_params(self, params) -> "ScorerModel":
        return ScorerModel(self.kind, self.feature_config, params, self.hidden_dim)

    def score(self, instance: RankingInstance) -> np.ndarray:
        return score_forward(self, instance)[0]

    def score_many(self, instances) -> list[np.ndarray]:
        scores, _ = forward_features(self, feature_matrix(instances, self.feature_config))
        off = offsets_of(instances)
        return [scores[a:b] for a, b in zip(off[:-1], off[1:])]


def n_params(kind: str, dim: int, hidden_dim: int = 0) -> int:
    if kind == "linear":
        return dim + 1
    return hidden_dim * dim + 2 * hidden_dim + 1


def init_model(kind="linear", feature_config=None, hidden_dim=32, seed=0) -> ScorerModel:
    """Weights and biases uniform in +-1/sqrt(fan_in), from a seeded generator."""
    config = feature_config or FeatureConfig()
    rng = np.random.default_rng(seed)
    d = config.dim
    if kind == "linear":
        params = rng.uniform(-1, 1, d + 1) / np.sqrt(d)
        return ScorerModel(kind, config, params)
    if kind != "mlp":
        raise ConfigError(f"unknown scorer kind {kind!r}")
    h = int(hidden_dim)
    first = rng.uniform(-1, 1, h * d + h) / np.sqrt(d)
    second = rng.uniform(-1, 1, h + 1) / np.sqrt(h)
    return ScorerModel(kind, config, np.concatenate([first, second]), h)


def _unpack(model: ScorerModel):
    p, d, h = model.params, model.feature_config.dim, model.hidden_dim
    if model.kind == "linear":
        return p[:d], p[d]
    w1 = p[: h * d].reshape(h, d)
    b1 = p[h * d: h * d + h]
    w2 = p[h * d + h: h * d + 2 * h]
    return w1, b1, w2, p[-1]


@dataclass
class ForwardCache:
    features: sp.csr_matrix
    pre_activation: np.ndarray = field(default=None)
    hidden: np.ndarray = field(default=None)


def forward_features(model: ScorerModel, features) -> tuple[np.ndarray, ForwardCache]:
    if features.shape[1] != model.feature_config.dim:
        raise ConfigError(
            f"feature dim {features.shape[1]} != model dim {model.feature_config.dim}"
        )
    if model.kind == "linear":
        w, b = _unpack(model)
        return np.asarray(features @ w).reshape(-1) + b, ForwardCache(features)
    w1, b1, w2, b2 = _unpack(model)
    pre = np.asarray(features @ w1.T) + b1
    hidden = np.maximum(pre, 0.0)
    return hidden @ w2 + b2, ForwardCache(features, pre, hidden)


def score_forward(model: ScorerModel, instance: RankingInstance):
    """Scores for every hypothesis of ``instance`` plus the backward cache."""
    return forward_features(model, feature_matrix([instance], model.feature_config))


def score_backward(model: ScorerModel, cache: ForwardCache, upstream) -> np.ndarray:
    """Gradient of ``sum_j upstream[j] * s_j`` with respect to ``model.params``."""
    g = np.asarray(upstream, dtype=np.float64).reshape(-1)
    x = cache.features
    if g.shape[0] != x.shape[0]:
        raise ConfigError(f"upstream has {g.shape[0]} entries for {x.shape[0]} scores")
    if model.kind == "linear":
        return np.concatenate([np.asarray(x.T @ g).reshape(-1), [g.sum()]])
    w1, b1, w2, b2 = _unpack(model)
    d_hidden = np.outer(g, w2) * (cache.pre_activation > 0)
    grad_w1 = np.asarray((x.T @ d_hidden).T)
    return np.concatenate(
        [grad_w1.reshape(-1), d_hidden.sum(axis=0), cache.hidden.T @ g, [g.sum()]]
    )


def save_model(model: ScorerModel, path) -> None:
    params = model.params.astype("<f8", copy=False)
    doc = {
        "format": MODEL_FORMAT,
        "version": 1,
        "kind": model.kind,
        "feature_config": model.feature_config.as_dict(),
        "hidden_dim": model.hidden_dim,
        "n_params": int(params.shape[0]),
        "params_dtype": "<f8",
        "params_b64": base64.b64encode(params.tobytes()).decode("ascii"),
    }
    atomic_write_text(path, json.dumps(doc, sort_keys=True) + "\n")


def load_model(path) -> ScorerModel:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not a model file ({exc.msg})") from None
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"{path}: not an {MODEL_FORMAT} file")
    params = np.frombuffer(base64.b64decode(doc["params_b64"]), dtype="<f8").astype(np.float64)
    if params.shape[0] != doc["n_params"]:
        raise DataError(f"{path}: parameter count mismatch")
    fc = doc["feature_config"]
    config = FeatureConfig(tuple(fc["ngram_orders"]), int(fc["dim"]), int(fc["seed"]))
    return ScorerModel(doc["kind"], config, params, int(doc["hidden_dim"]))


class ExternalScorer:
    """Serve scores from a table keyed by (story_id, hypothesis index).

    ``reference`` is the ranking dataset the table's score arrays are aligned
    with; it lets binary pairs be scored by hypothesis text as well.
    """

    kind = "external"

    def __init__(self, table: dict, reference):
        self.table = table
        self._lookup = {}
        for inst in reference:
            scores = table.get(inst.story_id)
            if scores is None:
                raise DataError(f"score table has no entry for story_id {inst.story_id!r}")
            if len(scores) != len(inst):
                raise DataError(
                    f"story_id {inst.story_id!r}: {len(scores)} scores for "
                    f"{len(inst)} hypotheses"
                )
            for j, hyp in enumerate(inst.hypotheses):
                key = (inst.story_id, normalize_text(hyp))
                if key in self._lookup and self._lookup[key] != scores[j]:
                    raise DataError(f"conflicting scores for {key!r}")
                self._lookup[key] = scores[j]

    def score(self, instance: RankingInstance) -> np.ndarray:
        out = np.empty(len(instance))
        for j, hyp in enumerate(instance.hypotheses):
            key = (instance.story_id, normalize_text(hyp))
            if key not in self._lookup:
                raise DataError(
                    f"score table has no score for story_id {instance.story_id!r}, "
                    f"hypothesis {j} ({hyp!r})"
                )
            out[j] = self._lookup[key]
        return out

    def score_many(self, instances) -> list[np.ndarray]:
        return [self.score(inst) for inst in instances]


def read_score_table(stream) -> dict:
    from .ingest import _lines, _load_record

    table = {}
    for lineno, line in _lines(stream):
        if not line.strip():
            continue
        rec = _load_record(line, lineno, ("story_id", "scores"))
        scores = rec["scores"]
        if not isinstance(scores, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in scores
        ):
            raise DataError("scores must be an array of numbers", lineno)
        arr = np.array(scores, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"line {lineno}: non-finite score")
        sid = str(rec["story_id"])
        if sid in table:
            raise DataError(f"duplicate story_id {sid!r}", lineno)
        table[sid] = arr
    return table


def write_score_table(rows, path) -> None:
    """``rows`` is an iterable of (story_id, scores)."""
    text = "".join(
        json.dumps({"story_id": sid, "scores": [float(v) for v in s]}) + "\n" for sid, s in rows
    )
    atomic_write_text(path, text)
