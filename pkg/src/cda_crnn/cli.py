"""Command-line entry point: ``cda-crnn <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Logs go to stderr; tables and predictions go to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import gradcheck
from ._io import atomic_write_text
from .corpus import (
    CorpusError,
    gen_long_range,
    gen_synthetic,
    load_corpus,
    load_embeddings,
    save_corpus,
    split_corpus,
)
from .metrics import paired_t_test
from .models import CELLS, VARIANTS, ModelConfig, load_checkpoint
from .numeric import make_rng
from .training import TrainingDiverged, evaluate, predict_corpus, train
from .transitions import read_matrix_file, render_transition_table, transition_matrix, write_matrix_file

log = logging.getLogger("cda_crnn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _widths(text):
    try:
        return tuple(int(w) for w in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_corpus_flags(p, required=True):
    p.add_argument("--corpus", required=required, help="corpus file")
    p.add_argument("--format", choices=("native", "msdialog"), default="native")


def _add_model_flags(p):
    d = ModelConfig()
    p.add_argument("--variant", choices=VARIANTS, default=d.variant)
    p.add_argument("--cell", choices=CELLS, default=d.cell)
    p.add_argument("--widths", type=_widths, default=d.widths, help="CRNN filter widths (default 3,4,5)")
    p.add_argument("--filters", type=int, default=d.filters, help="filters per width")
    p.add_argument("--cnn-dropout", type=float, default=d.cnn_dropout)
    p.add_argument("--hidden", type=int, default=d.hidden, help="recurrent units per direction")
    p.add_argument("--layers", type=int, default=d.layers, help="recurrent layers")
    p.add_argument("--rnn-dropout", type=float, default=d.rnn_dropout)
    p.add_argument("--pool-k", type=int, default=d.pool_k, help="dynamic k-max chunks (crnn_v3)")
    p.add_argument("--embed-dim", type=int, default=d.embed_dim)
    p.add_argument("--window", type=int, default=d.window, help="context window (cnn_cr)")
    p.add_argument("--kim-width", type=int, default=d.kim_width, help="shared filter width (cnn_kim, cnn_cr)")
    p.add_argument("--freeze-embeddings", action="store_true")
    p.add_argument("--embeddings", help="whitespace-separated embedding file (e.g. GloVe)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cda-crnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model with an 8:1:1 split")
    _add_corpus_flags(p)
    _add_model_flags(p)
    p.add_argument("--config", help="JSON file whose keys mirror the long flags (underscored)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--patience", type=int, default=None, help="stop after this many epochs without improvement")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--overfit", action="store_true",
                   help="sanity mode: train, select and test on the whole corpus instead of an 8:1:1 split")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("evaluate", help="score a checkpoint on a corpus split")
    _add_corpus_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--compare", help="second checkpoint; adds a paired t-test on per-utterance accuracy")
    p.add_argument("--split", choices=("all", "train", "validation", "test"), default="test")
    p.add_argument("--seed", type=int, default=0, help="split seed (use the training seed)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", help="write metrics JSON here")

    p = sub.add_parser("predict", help="print predicted labels per utterance")
    _add_corpus_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", help="also write the predictions to this file")

    p = sub.add_parser("analyze-transitions", help="DA transition table with INIT/TERM states")
    _add_corpus_flags(p)
    p.add_argument("--precision", type=int, default=1)
    p.add_argument("--out", help="write the probability matrix file here")

    p = sub.add_parser("gen-synthetic", help="write a synthetic native-format corpus")
    p.add_argument("--num-dialogues", type=int, default=200)
    p.add_argument("--min-len", type=int, default=2)
    p.add_argument("--max-len", type=int, default=12)
    p.add_argument("--noise", type=float, default=0.3, help="filler-token rate")
    p.add_argument("--extra-label-rate", type=float, default=0.0)
    p.add_argument("--planted", help="planted transition matrix in the analyze-transitions file format")
    p.add_argument("--long-range", action="store_true", help="last label depends on the first utterance's cue")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer and model variant")
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    return parser


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

CONFIG_FLAGS = ("variant", "cell", "widths", "filters", "cnn_dropout", "hidden", "layers", "rnn_dropout",
                "pool_k", "embed_dim", "window", "kim_width")
RUN_FLAGS = ("seed", "epochs", "patience", "lr", "min_count", "threshold", "freeze_embeddings", "embeddings",
             "overfit")


def apply_config_file(args, parser_defaults: dict) -> None:
    """Fill values from ``--config``; flags given explicitly on the command line win."""
    with open(args.config, encoding="utf-8") as fh:
        cfg = json.load(fh)
    allowed = set(CONFIG_FLAGS) | set(RUN_FLAGS)
    unknown = set(cfg) - allowed
    if unknown:
        raise UsageError(f"unknown keys in {args.config}: {sorted(unknown)}")
    for key, value in cfg.items():
        if getattr(args, key) == parser_defaults.get(key):
            setattr(args, key, tuple(value) if key == "widths" else value)


def model_config_from_args(args) -> ModelConfig:
    kw = {k: getattr(args, k) for k in CONFIG_FLAGS}
    return ModelConfig(**kw, train_embeddings=not args.freeze_embeddings, seed=args.seed)


def cmd_train(args, parser_defaults) -> int:
    if args.config:
        apply_config_file(args, parser_defaults)
    config = model_config_from_args(args)
    corpus = load_corpus(args.corpus, args.format)
    if args.overfit:
        train_set = val_set = test_set = corpus
    else:
        train_set, val_set, test_set = split_corpus(corpus, seed=args.seed)
    log.info("split %d dialogues into %d/%d/%d", len(corpus), len(train_set), len(val_set), len(test_set))
    embeddings = None
    if args.embeddings:
        path, dim = args.embeddings, config.embed_dim
        embeddings = lambda vocab: load_embeddings(path, vocab, dim, make_rng(config.seed + 2))  # noqa: E731

    os.makedirs(args.out, exist_ok=True)
    model, report = train(train_set, val_set, config, args.epochs, lr=args.lr, patience=args.patience,
                          threshold=args.threshold, min_count=args.min_count, embeddings=embeddings)
    model.save(os.path.join(args.out, "checkpoint"))
    atomic_write_text(os.path.join(args.out, "train.log"), "\n".join(report.log_lines()) + "\n")
    metrics = {
        "config": config.to_dict(),
        "hyperparameters": config.hyperparameter_tuple(),
        "split": {"train": len(train_set), "validation": len(val_set), "test": len(test_set), "seed": args.seed,
                  "overfit": args.overfit},
        "train_report": report.to_dict(),
        "validation": evaluate(model, val_set, args.threshold).to_dict(),
        "test": evaluate(model, test_set, args.threshold).to_dict(),
    }
    atomic_write_text(os.path.join(args.out, "metrics.json"), json.dumps(metrics, indent=1) + "\n")
    print(f"best epoch {report.best_epoch}: validation f1 {metrics['validation']['f1']:.4f}, "
          f"test accuracy {metrics['test']['accuracy']:.4f}, test f1 {metrics['test']['f1']:.4f}")
    return EXIT_OK


def _select_split(corpus, split, seed):
    if split == "all":
        return corpus
    parts = dict(zip(("train", "validation", "test"), split_corpus(corpus, seed=seed)))
    return parts[split]


def _check_vocab(model, corpus):
    if model.taxonomy != corpus.taxonomy:
        raise CorpusError(f"checkpoint taxonomy {model.taxonomy} does not match corpus taxonomy {corpus.taxonomy}")


def cmd_evaluate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    corpus = _select_split(load_corpus(args.corpus, args.format), args.split, args.seed)
    _check_vocab(model, corpus)
    report = evaluate(model, corpus, args.threshold)
    if args.compare:
        other = load_checkpoint(args.compare)
        _check_vocab(other, corpus)
        other_report = evaluate(other, corpus, args.threshold)
        report.t_test = paired_t_test(report.per_utterance, other_report.per_utterance)
    print(report.format())
    if args.out:
        atomic_write_text(args.out, json.dumps(report.to_dict(), indent=1) + "\n")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    corpus = load_corpus(args.corpus, args.format)
    _check_vocab(model, corpus)
    order = {code: j for j, code in enumerate(model.taxonomy)}
    lines = []
    for dialogue, preds in zip(corpus, predict_corpus(model, corpus, args.threshold)):
        for t, labels in enumerate(preds):
            lines.append(f"{dialogue.id}\t{t}\t{' '.join(sorted(labels, key=order.__getitem__))}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        atomic_write_text(args.out, text)
    return EXIT_OK


def cmd_analyze_transitions(args) -> int:
    matrix = transition_matrix(load_corpus(args.corpus, args.format))
    print(render_transition_table(matrix, args.precision))
    if args.out:
        write_matrix_file(matrix, args.out)
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    if args.long_range:
        corpus = gen_long_range(args.num_dialogues, (args.min_len, args.max_len), noise_rate=args.noise, seed=args.seed)
    else:
        planted = None
        if args.planted:
            _, _, planted = read_matrix_file(args.planted)
        corpus = gen_synthetic(args.num_dialogues, (args.min_len, args.max_len), planted, noise_rate=args.noise,
                               seed=args.seed, extra_label_rate=args.extra_label_rate)
    save_corpus(corpus, args.out)
    log.info("wrote %d dialogues (%d utterances) to %s", len(corpus), corpus.num_utterances, args.out)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    failed = 0
    for seed in args.seeds:
        checks = {**gradcheck.layer_checks(seed, args.eps, args.tol), **gradcheck.model_checks(seed, args.eps, args.tol)}
        for name, report in checks.items():
            print(f"seed={seed} {name:<28} {report}")
            failed += not report.passed
    print("all gradient checks passed" if not failed else f"{failed} gradient checks FAILED")
    return EXIT_OK if not failed else EXIT_NUMERIC


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    train_defaults = vars(parser.parse_args(["train", "--corpus", "", "--out", ""]))
    handlers = {
        "train": lambda: cmd_train(args, train_defaults),
        "evaluate": lambda: cmd_evaluate(args),
        "predict": lambda: cmd_predict(args),
        "analyze-transitions": lambda: cmd_analyze_transitions(args),
        "gen-synthetic": lambda: cmd_gen_synthetic(args),
        "gradcheck": lambda: cmd_gradcheck(args),
    }
    try:
        return handlers[args.command]()
    except UsageError as exc:
        print(f"cda-crnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, FloatingPointError, ArithmeticError) as exc:
        print(f"cda-crnn: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CorpusError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"cda-crnn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
