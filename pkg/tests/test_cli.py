import json

import numpy as np
import pytest

from abductrank import kernels
from abductrank.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from abductrank.ingest import read_ranking
from abductrank.synthetic import _write_pairs, generate_corpus
from abductrank.ingest import write_ranking


def write_pairs(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")


TOY = [
    {"story_id": "a", "obs1": "Sam went out.", "obs2": "Sam got wet.", "hyp1": "It rained.",
     "hyp2": "It was sunny.", "label": 1},
    {"story_id": "b", "obs1": "Sam went out.", "obs2": "Sam got wet.", "hyp1": "Sam stayed dry.",
     "hyp2": "It rained.", "label": 2},
]


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    c = generate_corpus(40, seed=3, n_dev=100, n_test=100)
    _write_pairs(c.dev_pairs, d / "dev.jsonl")
    _write_pairs(c.test_pairs, d / "test.jsonl")
    write_ranking(c.train_lists, d / "train.jsonl")
    write_ranking(c.classification_lists, d / "train_pairs.jsonl")
    return d


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_convert_toy(tmp_path, capsys):
    write_pairs(tmp_path / "p.jsonl", TOY)
    code, out, _ = run(capsys, "convert", tmp_path / "p.jsonl", tmp_path / "r.jsonl")
    assert code == EXIT_OK
    [q] = read_ranking(tmp_path / "r.jsonl")
    assert len(q) == 3 and q.labels.tolist() == [1.0, 0.0, 0.0]
    summary = json.loads(out)
    assert summary["num_queries"] == 1 and summary["mean_hypotheses_per_query"] == 3.0
    assert summary["mean_plausible_per_query"] == 1.0 and summary["num_untrainable"] == 0
    code, out, _ = run(capsys, "convert", "--no-merge", tmp_path / "p.jsonl", tmp_path / "r2.jsonl")
    assert code == EXIT_OK and json.loads(out)["num_queries"] == 2


def test_stats_thresholds(tmp_path, capsys):
    write_pairs(tmp_path / "p.jsonl", TOY)
    run(capsys, "convert", tmp_path / "p.jsonl", tmp_path / "r.jsonl")
    (tmp_path / "c.cfg").write_text("threshold = 0.99\n")
    code, out, _ = run(capsys, "stats", tmp_path / "r.jsonl", "--config", tmp_path / "c.cfg")
    assert code == EXIT_OK and json.loads(out)["mean_plausible_per_query"] == 1.0
    code, out, _ = run(capsys, "stats", tmp_path / "r.jsonl", "--threshold", "1.0")
    assert json.loads(out)["mean_plausible_per_query"] == 0.0


def test_error_exit_codes(tmp_path, capsys):
    code, _, err = run(capsys, "stats", tmp_path / "missing.jsonl")
    assert code == EXIT_USAGE and "not found" in err
    (tmp_path / "bad.jsonl").write_text(json.dumps(dict(TOY[0], label=5)) + "\n")
    code, _, err = run(capsys, "convert", tmp_path / "bad.jsonl", tmp_path / "o.jsonl")
    assert code == EXIT_DATA and "line 1" in err
    with pytest.raises(SystemExit) as exc:
        main(["train", "--loss", "nope"])
    assert exc.value.code == EXIT_USAGE


def test_config_file_rules(tmp_path, capsys, corpus_dir):
    base = ["train", "--train", corpus_dir / "train.jsonl", "--dev", corpus_dir / "dev.jsonl"]
    (tmp_path / "typo.cfg").write_text("learning_rat = 0.1\n")
    code, _, err = run(capsys, *base, "--out", tmp_path / "x", "--config", tmp_path / "typo.cfg")
    assert code == EXIT_USAGE and "learning_rat" in err
    (tmp_path / "other.cfg").write_text("bins = 4\n")
    code, _, err = run(capsys, *base, "--out", tmp_path / "x", "--config", tmp_path / "other.cfg")
    assert code == EXIT_USAGE and "do not apply" in err
    # file overrides defaults, flags override the file
    (tmp_path / "ok.cfg").write_text("# settings\nlr = 0.5\nepochs = 2\nbatch = 8\ndim = 512\nngrams = 1\n")
    code, _, _ = run(capsys, *base, "--out", tmp_path / "o", "--config", tmp_path / "ok.cfg", "--lr", "0.02")
    assert code == EXIT_OK
    summary = json.loads((tmp_path / "o" / "report.jsonl").read_text().strip().split("\n")[-1])["summary"]
    cfg = summary["config"]
    assert cfg["learning_rate"] == 0.02 and cfg["max_epochs"] == 2 and cfg["batch_size"] == 8
    assert cfg["patience"] == 5 and cfg["features"] == {"ngram_orders": [1], "dim": 512, "seed": 0}


def train_args(corpus_dir, out, *extra):
    return ["train", "--train", corpus_dir / "train.jsonl", "--dev", corpus_dir / "dev.jsonl",
            "--out", out, "--epochs", "4", "--dim", "1024", "--lr", "0.05", *extra]


def test_train_is_byte_identical_and_reports_running_best(tmp_path, capsys, corpus_dir):
    for name in ("a", "b"):
        code, _, _ = run(capsys, *train_args(corpus_dir, tmp_path / name, "--scorer", "mlp", "--hidden", "3"))
        assert code == EXIT_OK
    for f in ("model.json", "optimizer.json", "report.jsonl"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    lines = [json.loads(ln) for ln in (tmp_path / "a" / "report.jsonl").read_text().splitlines()]
    best = [e["best_dev_accuracy"] for e in lines[:-1]]
    assert best == sorted(best) and lines[-1]["summary"]["best_dev_accuracy"] == best[-1]
    assert lines[-1]["summary"]["config"]["loss"] == "listnet_kld"
    run(capsys, *train_args(corpus_dir, tmp_path / "c", "--scorer", "mlp", "--hidden", "3", "--seed", "1"))
    assert (tmp_path / "c" / "model.json").read_bytes() != (tmp_path / "a" / "model.json").read_bytes()


def test_classification_on_lists_fails_before_training(tmp_path, capsys, corpus_dir):
    out = tmp_path / "ck"
    code, _, err = run(capsys, *train_args(corpus_dir, out, "--loss", "binary_classification"))
    assert code == EXIT_USAGE and "N=2" in err
    assert not out.exists()
    code, _, _ = run(capsys, "train", "--train", corpus_dir / "train_pairs.jsonl", "--dev",
                     corpus_dir / "dev.jsonl", "--out", out, "--loss", "binary_classification",
                     "--epochs", "1", "--dim", "256")
    assert code == EXIT_OK and (out / "model.json").exists()


def test_eval_perfect_table_and_analyze(tmp_path, capsys):
    write_pairs(tmp_path / "p.jsonl", TOY)
    run(capsys, "convert", tmp_path / "p.jsonl", tmp_path / "r.jsonl")
    [q] = read_ranking(tmp_path / "r.jsonl")
    (tmp_path / "s.jsonl").write_text(json.dumps({"story_id": q.story_id, "scores": q.labels.tolist()}) + "\n")
    # one pair file keyed by the merged story id
    write_pairs(tmp_path / "dev.jsonl", [dict(r, story_id=q.story_id) for r in TOY])
    args = ["--scores", tmp_path / "s.jsonl", "--ranking", tmp_path / "r.jsonl"]
    code, out, _ = run(capsys, "eval", *args, "--pairs", tmp_path / "dev.jsonl", "--k", "2")
    assert code == EXIT_OK
    acc, nd = [json.loads(ln) for ln in out.strip().split("\n")]
    assert acc == {"metric": "accuracy", "value": 1.0, "n": 2}
    assert nd == {"metric": "ndcg@2", "value": 1.0, "n": 1}
    code, _, _ = run(capsys, "analyze", *args, "--pairs", tmp_path / "dev.jsonl", "--bins", "4",
                     "--out", tmp_path / "h.tsv")
    rows = (tmp_path / "h.tsv").read_text().strip().split("\n")
    assert code == EXIT_OK and rows[0] == "bin_left\tbin_right\tfrequency"
    assert sum(float(r.split("\t")[2]) for r in rows[1:]) == pytest.approx(1.0, abs=1e-12)
    # missing coverage names the key
    write_pairs(tmp_path / "other.jsonl", [dict(TOY[0], story_id="zzz")])
    code, _, err = run(capsys, "eval", *args, "--pairs", tmp_path / "other.jsonl")
    assert code == EXIT_DATA and "'zzz'" in err
    (tmp_path / "nan.jsonl").write_text('{"story_id": "%s", "scores": [NaN, 1, 2]}\n' % q.story_id)
    code, _, _ = run(capsys, "eval", "--scores", tmp_path / "nan.jsonl", "--ranking", tmp_path / "r.jsonl",
                     "--pairs", tmp_path / "dev.jsonl")
    assert code == EXIT_NUMERIC
    code, _, _ = run(capsys, "eval", "--pairs", tmp_path / "dev.jsonl")
    assert code == EXIT_USAGE


def test_eval_with_trained_model(tmp_path, capsys, corpus_dir):
    run(capsys, *train_args(corpus_dir, tmp_path / "m"))
    code, out, _ = run(capsys, "eval", "--model", tmp_path / "m" / "model.json",
                       "--pairs", corpus_dir / "test.jsonl")
    res = json.loads(out)
    assert code == EXIT_OK and res["n"] == 100 and 0 <= res["value"] <= 1


def test_gradcheck_passes(capsys):
    code, out, _ = run(capsys, "gradcheck", "--cases", "20")
    rows = [ln for ln in out.splitlines() if "N=" in ln]
    assert code == EXIT_OK and len(rows) == 6 * 7 + 1
    assert all(r.endswith("PASS") for r in rows) and "43/43 passed" in out


def test_gradcheck_reports_a_broken_gradient(capsys, monkeypatch):
    real = kernels._active

    class Broken:
        @staticmethod
        def batch_loss(kind, labels, scores, offsets, option):
            values, grad = real.batch_loss(kind, labels, scores, offsets, option)
            return values, grad * (1.001 if kind == kernels.LISTMLE else 1.0)

    monkeypatch.setattr(kernels, "_active", Broken)
    code, out, _ = run(capsys, "gradcheck", "--cases", "5")
    assert code == EXIT_NUMERIC
    assert all(("FAIL" in ln) == ln.startswith("listmle") for ln in out.splitlines() if "N=" in ln)
