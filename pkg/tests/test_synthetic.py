import numpy as np

from abductrank.ingest import corpus_stats
from abductrank.synthetic import generate_corpus, main


def test_corpus_shape_and_labels():
    c = generate_corpus(60, seed=4, n_dev=50, n_test=80)
    assert len(c.train_lists) == 60 and len(c.dev_pairs) == 50 and len(c.test_pairs) == 80
    assert all(4 <= len(q) <= 16 for q in c.train_lists)
    stats = corpus_stats(c.train_lists)
    assert stats.mean_plausible_per_query < stats.mean_hypotheses_per_query
    labels = np.concatenate([q.labels for q in c.train_lists])
    assert len(np.unique(labels)) > 2  # graded, not just 0/1
    assert 0.3 < np.mean([p.correct == 1 for p in c.train_pairs]) < 0.7
    assert all(0 < v < 1 for v in c.plausibility.values())
    assert {p.story_id for p in c.dev_pairs}.isdisjoint(q.story_id for q in c.train_lists)


def test_gold_side_is_more_plausible_on_average():
    c = generate_corpus(100, seed=1, n_dev=10, n_test=400)
    p = c.plausibility
    gold = np.array([p[(t.story_id, t.gold)] for t in c.test_pairs])
    other = np.array([p[(t.story_id, t.other)] for t in c.test_pairs])
    assert np.mean(gold > other) > 0.8


def test_deterministic_and_writes_files(tmp_path):
    a, b = generate_corpus(20, seed=2, n_dev=5, n_test=5), generate_corpus(20, seed=2, n_dev=5, n_test=5)
    assert a.train_pairs == b.train_pairs and a.train_lists == b.train_lists
    main([str(tmp_path), "--queries", "10"])
    names = sorted(f.name for f in tmp_path.iterdir())
    assert names == ["dev_pairs.jsonl", "test_pairs.jsonl", "train_binary_lists.jsonl",
                     "train_pairs.jsonl", "train_ranking.jsonl"]
