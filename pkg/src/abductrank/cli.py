"""Command-line entry point: convert, stats, train, eval, analyze, gradcheck.

Options may also come from ``--config FILE`` holding ``key = value`` lines
(``#`` starts a comment; keys are option names with ``-`` or ``_``). Flags
override file values, which override built-in defaults.

Exit status: 0 success, 2 usage/configuration error, 3 data error,
4 numerical failure (including a failing gradient check).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, gradcheck, kernels
from .core import AbductRankError, ConfigError, DataError, NumericalError
from .evaluate import binary_accuracy, margin_histogram, metric_line, ndcg_at_k
from .ingest import (
    corpus_stats,
    merge_to_ranking,
    pairs_as_lists,
    parse_binary_instances,
    read_ranking,
    write_ranking,
)
from .losses import LOSS_KINDS, LossSpec
from ._fileio import atomic_write_text
from .scorer import ExternalScorer, FeatureConfig, init_model, load_model, read_score_table, save_model
from .train import TrainConfig, save_adam_state, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

logger = logging.getLogger("abductrank")


def _ints(text):
    return tuple(int(t) for t in str(text).replace(",", " ").split())


# option name -> (type, default) for options that may come from a config file
SETTINGS = {
    "loss": (str, "listnet_kld"),
    "temperature": (float, 1.0),
    "scorer": (str, "linear"),
    "hidden": (int, 32),
    "dim": (int, 2**18),
    "ngrams": (_ints, (1, 2)),
    "lr": (float, 4e-4),
    "batch": (int, 32),
    "epochs": (int, 64),
    "patience": (int, 5),
    "seed": (int, 0),
    "bins": (int, 20),
    "k": (int, None),
    "threshold": (float, 0.5),
    "cases": (int, 100),
}
COMMAND_SETTINGS = {
    "convert": ("threshold",),
    "stats": ("threshold",),
    "train": ("loss", "temperature", "scorer", "hidden", "dim", "ngrams", "lr",
              "batch", "epochs", "patience", "seed"),
    "eval": ("k",),
    "analyze": ("bins",),
    "gradcheck": ("cases", "seed"),
}


class UsageError(AbductRankError):
    pass


def read_config_file(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in SETTINGS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve_settings(args) -> dict:
    """Merge flag values, config-file values and defaults for this command."""
    allowed = COMMAND_SETTINGS[args.command]
    from_file = read_config_file(args.config) if args.config else {}
    stray = set(from_file) - set(allowed)
    if stray:
        raise UsageError(f"config key(s) {sorted(stray)} do not apply to '{args.command}'")
    out = {}
    for key in allowed:
        conv, default = SETTINGS[key]
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in from_file:
            try:
                out[key] = conv(from_file[key])
            except ValueError:
                raise UsageError(f"bad value for {key!r}: {from_file[key]!r}") from None
        else:
            out[key] = default
    return out


def _existing(path, what):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found or unreadable: {path}")
    return p


def _load_scorer(args):
    if args.model and args.scores:
        raise UsageError("give either --model or --scores, not both")
    if args.model:
        return load_model(_existing(args.model, "model file"))
    if args.scores:
        if not args.ranking:
            raise UsageError("--scores needs --ranking (the file the table is aligned with)")
        table = read_score_table(_existing(args.scores, "score table"))
        return ExternalScorer(table, read_ranking(_existing(args.ranking, "ranking file")))
    raise UsageError("need --model or --scores")


def cmd_convert(args, cfg):
    pairs = parse_binary_instances(_existing(args.pairs, "pair file"))
    dataset = pairs_as_lists(pairs) if args.no_merge else merge_to_ranking(pairs)
    write_ranking(dataset, args.out)
    summary = {"records": len(pairs)}
    if dataset:
        summary.update(corpus_stats(dataset, cfg["threshold"]).as_dict())
    print(json.dumps(summary))
    return EXIT_OK


def cmd_stats(args, cfg):
    dataset = read_ranking(_existing(args.ranking, "ranking file"))
    print(json.dumps(corpus_stats(dataset, cfg["threshold"]).as_dict()))
    return EXIT_OK


def cmd_train(args, cfg):
    train_set = read_ranking(_existing(args.train, "training ranking file"))
    dev_pairs = parse_binary_instances(_existing(args.dev, "dev pair file"))
    if not dev_pairs:
        raise DataError(f"{args.dev}: no dev pairs")
    options = {"temperature": cfg["temperature"]} if cfg["loss"] == "approx_ndcg" else {}
    config = TrainConfig(
        loss=LossSpec.parse(cfg["loss"], **options),
        learning_rate=cfg["lr"],
        batch_size=cfg["batch"],
        max_epochs=cfg["epochs"],
        patience=cfg["patience"],
        seed=cfg["seed"],
    )
    features = FeatureConfig(cfg["ngrams"], cfg["dim"], cfg["seed"])
    model = init_model(cfg["scorer"], features, cfg["hidden"], seed=cfg["seed"])
    best, report, state = train(model, train_set, dev_pairs, config)
    report.config.update(
        scorer=cfg["scorer"], hidden=best.hidden_dim, features=features.as_dict(),
        train=str(args.train), dev=str(args.dev),
    )
    out = Path(args.out)
    save_model(best, out / "model.json")
    save_adam_state(state, out / "optimizer.json")
    atomic_write_text(out / "report.jsonl", report.to_jsonl())
    print(json.dumps({"best_epoch": report.best_epoch,
                      "best_dev_accuracy": report.best_dev_accuracy,
                      "stop_reason": report.stop_reason,
                      "epochs_run": len(report.epochs)}))
    return EXIT_OK


def cmd_eval(args, cfg):
    scorer = _load_scorer(args)
    if not args.pairs and cfg["k"] is None:
        raise UsageError("eval needs --pairs and/or --k with --ranking")
    if args.pairs:
        pairs = parse_binary_instances(_existing(args.pairs, "pair file"))
        print(metric_line("accuracy", binary_accuracy(scorer, pairs), len(pairs)))
    if cfg["k"] is not None:
        if not args.ranking:
            raise UsageError("--k needs --ranking")
        dataset = read_ranking(_existing(args.ranking, "ranking file"))
        value, n, _ = ndcg_at_k(scorer, dataset, cfg["k"], return_counts=True)
        print(metric_line(f"ndcg@{cfg['k']}", value, n))
    return EXIT_OK


def cmd_analyze(args, cfg):
    scorer = _load_scorer(args)
    pairs = parse_binary_instances(_existing(args.pairs, "pair file"))
    hist = margin_histogram(scorer, pairs, cfg["bins"])
    if args.out:
        atomic_write_text(args.out, hist.to_tsv())
    else:
        sys.stdout.write(hist.to_tsv())
    return EXIT_OK


def cmd_gradcheck(args, cfg):
    rows = gradcheck.run_suite(cases=cfg["cases"], seed=cfg["seed"])
    print(f"backend: {kernels.BACKEND}")
    for row in rows:
        print(row.format())
    failed = [r for r in rows if not r.passed]
    print(f"{len(rows) - len(failed)}/{len(rows)} passed")
    return EXIT_NUMERIC if failed else EXIT_OK


COMMANDS = {
    "convert": cmd_convert,
    "stats": cmd_stats,
    "train": cmd_train,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
    "gradcheck": cmd_gradcheck,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="abductrank", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", parents=[common], help="binary-choice pairs -> ranking lists")
    p.add_argument("pairs")
    p.add_argument("out")
    p.add_argument("--no-merge", action="store_true",
                   help="one two-item list per record (classification-baseline view)")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("stats", parents=[common], help="corpus statistics of a ranking file")
    p.add_argument("ranking")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("train", parents=[common], help="train a scorer")
    p.add_argument("--train", required=True, help="ranking-form training file")
    p.add_argument("--dev", required=True, help="binary-choice dev file")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--loss", choices=LOSS_KINDS)
    p.add_argument("--temperature", type=float)
    p.add_argument("--scorer", choices=("linear", "mlp"))
    p.add_argument("--hidden", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--ngrams", type=_ints)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--seed", type=int)

    for name, helptext in (("eval", "accuracy and NDCG@k"), ("analyze", "gold-probability histogram")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--model")
        p.add_argument("--scores", help="score table (JSON lines: story_id, scores)")
        p.add_argument("--ranking", help="ranking file (score-table alignment / NDCG)")
        p.add_argument("--pairs", required=(name == "analyze"), help="binary-choice file")
        if name == "eval":
            p.add_argument("--k", type=int)
        else:
            p.add_argument("--bins", type=int)
            p.add_argument("--out", help="TSV output path (default stdout)")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of all losses")
    p.add_argument("--cases", type=int)
    p.add_argument("--seed", type=int)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_settings(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"abductrank {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"abductrank {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"abductrank {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
