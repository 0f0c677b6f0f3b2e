"""Reading binary-choice records and reorganizing them into ranking lists."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from ._fileio import atomic_write_text
from .core import BinaryChoiceInstance, DataError, RankingInstance, normalize_text

logger = logging.getLogger(__name__)

BINARY_KEYS = ("story_id", "obs1", "obs2", "hyp1", "hyp2", "label")
RANKING_KEYS = ("story_id", "obs1", "obs2", "hypotheses", "labels", "trainable")


@dataclass(frozen=True)
class CorpusStats:
    num_queries: int
    mean_hypotheses_per_query: float
    mean_plausible_per_query: float
    num_untrainable: int = 0

    def as_dict(self):
        return {
            "num_queries": self.num_queries,
            "mean_hypotheses_per_query": self.mean_hypotheses_per_query,
            "mean_plausible_per_query": self.mean_plausible_per_query,
            "num_untrainable": self.num_untrainable,
        }


def _lines(stream):
    if isinstance(stream, (str, Path)):
        with open(stream, encoding="utf-8") as fh:
            yield from enumerate(fh.read().splitlines(), start=1)
        return
    yield from enumerate((line.rstrip("\n") for line in stream), start=1)


def _load_record(line, lineno, keys):
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed JSON ({exc.msg})", lineno) from None
    if not isinstance(rec, dict):
        raise DataError("record is not a JSON object", lineno)
    missing = [k for k in keys if k not in rec]
    if missing:
        raise DataError(f"missing field(s) {missing}", lineno)
    return rec


def parse_binary_instances(stream) -> list[BinaryChoiceInstance]:
    """Parse JSON-lines binary-choice records.

    ``stream`` is a path or an iterable of lines. Blank lines are skipped.
    """
    out = []
    for lineno, line in _lines(stream):
        if not line.strip():
            continue
        rec = _load_record(line, lineno, BINARY_KEYS)
        label = rec["label"]
        if isinstance(label, str) and label.strip() in ("1", "2"):
            label = int(label)
        if label not in (1, 2) or isinstance(label, bool):
            raise DataError(f"label must be 1 or 2, got {label!r}", lineno)
        try:
            out.append(
                BinaryChoiceInstance(
                    str(rec["story_id"]), rec["obs1"], rec["obs2"],
                    rec["hyp1"], rec["hyp2"], label,
                )
            )
        except DataError as exc:
            raise DataError(str(exc), lineno) from None
    return out


def parse_split_with_labels(records_path, labels_path) -> list[BinaryChoiceInstance]:
    """Join a JSON-lines file without labels and a file of one label per line.

    This is how the public abductive-NLI release ships each split
    (``train.jsonl`` plus ``train-labels.lst``).
    """
    with open(labels_path, encoding="utf-8") as fh:
        labels = [ln.strip() for ln in fh if ln.strip()]
    out = []
    records = [(n, ln) for n, ln in _lines(records_path) if ln.strip()]
    if len(records) != len(labels):
        raise DataError(f"{len(records)} records but {len(labels)} labels")
    for (lineno, line), label in zip(records, labels):
        rec = _load_record(line, lineno, BINARY_KEYS[:-1])
        rec["label"] = label
        try:
            out.extend(parse_binary_instances([json.dumps(rec)]))
        except DataError as exc:
            raise DataError(exc.detail, lineno) from None
    return out


def merge_to_ranking(instances) -> list[RankingInstance]:
    """Group instances by observation pair and label each hypothesis.

    A hypothesis's label is the fraction of its occurrences in which it was
    the gold choice. Lists keep first-appearance order for groups and for
    hypotheses; the story id is the smallest one seen in the group so it does
    not depend on input order. Groups whose labels are all tied are kept and
    marked ``trainable=False``.
    """
    groups = {}
    for inst in instances:
        key = (normalize_text(inst.obs1), normalize_text(inst.obs2))
        grp = groups.get(key)
        if grp is None:
            grp = groups[key] = {"ids": set(), "counts": {}}
        grp["ids"].add(inst.story_id)
        for hyp, won in ((inst.hyp1, inst.correct == 1), (inst.hyp2, inst.correct == 2)):
            h = normalize_text(hyp)
            wins, seen = grp["counts"].get(h, (0, 0))
            grp["counts"][h] = (wins + int(won), seen + 1)

    out = []
    for (obs1, obs2), grp in groups.items():
        hyps = tuple(grp["counts"])
        labels = [float(Fraction(w, n)) for w, n in grp["counts"].values()]
        out.append(RankingInstance(min(grp["ids"]), obs1, obs2, hyps, labels))
    return out


def pairs_as_lists(instances) -> list[RankingInstance]:
    """One two-item list per binary record, gold labeled 1 and the other 0.

    This is the training view used by the classification baseline.
    """
    out = []
    for inst in instances:
        labels = (1.0, 0.0) if inst.correct == 1 else (0.0, 1.0)
        out.append(
            RankingInstance(
                inst.story_id, normalize_text(inst.obs1), normalize_text(inst.obs2),
                (normalize_text(inst.hyp1), normalize_text(inst.hyp2)), labels,
            )
        )
    return out


def corpus_stats(dataset, threshold: float = 0.5) -> CorpusStats:
    if not dataset:
        raise DataError("corpus_stats needs a non-empty dataset")
    sizes = np.array([len(q) for q in dataset], dtype=np.float64)
    plausible = np.array([np.sum(q.labels > threshold) for q in dataset], dtype=np.float64)
    return CorpusStats(
        num_queries=len(dataset),
        mean_hypotheses_per_query=float(sizes.mean()),
        mean_plausible_per_query=float(plausible.mean()),
        num_untrainable=sum(not q.trainable for q in dataset),
    )


def ranking_to_record(inst: RankingInstance) -> dict:
    return {
        "story_id": inst.story_id,
        "obs1": inst.obs1,
        "obs2": inst.obs2,
        "hypotheses": list(inst.hypotheses),
        "labels": [float(v) for v in inst.labels],
        "trainable": bool(inst.trainable),
    }


def dumps_ranking(dataset) -> str:
    # json writes floats with repr(), which round-trips float64 exactly
    return "".join(
        json.dumps(ranking_to_record(q), ensure_ascii=False) + "\n" for q in dataset
    )


def write_ranking(dataset, path) -> None:
    atomic_write_text(path, dumps_ranking(dataset))


def read_ranking(stream) -> list[RankingInstance]:
    out = []
    for lineno, line in _lines(stream):
        if not line.strip():
            continue
        rec = _load_record(line, lineno, RANKING_KEYS)
        hyps, labels, trainable = rec["hypotheses"], rec["labels"], rec["trainable"]
        if not isinstance(hyps, list) or not all(isinstance(h, str) for h in hyps):
            raise DataError("hypotheses must be an array of strings", lineno)
        if not isinstance(labels, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in labels
        ):
            raise DataError("labels must be an array of numbers", lineno)
        if not isinstance(trainable, bool):
            raise DataError("trainable must be a boolean", lineno)
        try:
            out.append(
                RankingInstance(
                    str(rec["story_id"]), rec["obs1"], rec["obs2"],
                    tuple(hyps), labels, trainable,
                )
            )
        except DataError as exc:
            raise DataError(str(exc), lineno) from None
    return out
