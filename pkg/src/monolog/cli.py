"""``monolog`` command line: generate, train, eval, score, stream, explain.

Configuration files are JSON. Exit codes: 0 success, 1 usage error,
2 data error (unreadable or malformed input files), 3 model error (a
model file that is missing or has the wrong version).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import datagen
from .classifiers import ModelFormatError, load_model, save_model
from .graph import graph_from_log, to_dot
from .logmodel import EventAlphabet, LogFormatError, parse_log
from .scoring import evaluate, explain, stream_rows
from .training import TrainConfig, fit

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
    except OSError as e:
        raise DataError(f"cannot read config {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON ({e.msg}, line {e.lineno})") from None
    if not isinstance(obj, dict):
        raise DataError(f"{path}: config must be a JSON object")
    return obj


def _split_dir(path: Path, default_split: str) -> Path:
    """Accept either a split directory or a corpus root holding ``default_split``."""
    if (path / "manifest.csv").exists():
        return path
    if (path / default_split / "manifest.csv").exists():
        return path / default_split
    raise DataError(f"{path}: no manifest.csv (expected a corpus split directory)")


def _load_model(path):
    try:
        return load_model(path)
    except FileNotFoundError as e:
        raise ModelFormatError(f"model file not found: {e.filename}") from None
    except (KeyError, TypeError) as e:
        raise ModelFormatError(f"{path}: malformed model metadata ({e})") from None


def _read_log(path, model):
    try:
        return parse_log(path, model.alphabet)
    except FileNotFoundError:
        raise DataError(f"log file not found: {path}") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    cfg = datagen.GenConfig.from_dict(_read_json(args.config)) if args.config else datagen.GenConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    corpus = datagen.generate(cfg)
    datagen.write_corpus(corpus, args.out, cfg)
    n_mal = sum(s.label for s in corpus.train + corpus.test)
    print(f"wrote {len(corpus.train)} train / {len(corpus.test)} test logs "
          f"({n_mal} malware) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = TrainConfig.from_dict(_read_json(args.config)) if args.config else TrainConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    items = datagen.read_split(_split_dir(Path(args.corpus), "train"))
    if not items:
        raise DataError(f"{args.corpus}: empty corpus")
    alphabet = EventAlphabet.load(_split_dir(Path(args.corpus), "train") / "event_types.json")
    model, history = fit([it.log for it in items], alphabet, cfg, args.history)
    save_model(model, args.model)
    last = history[-1] if history else None
    if last is not None:
        print(f"trained {cfg.model.classifier} ({'monotone' if cfg.model.monotone else 'baseline'}) "
              f"for {len(history)} epochs; final val AUC {last.val_auc:.6f}")
    print(f"saved model to {args.model}")
    return EXIT_OK


def format_report(report, model) -> str:
    kind = f"{model.config.classifier} {'monotone' if model.config.monotone else 'non-monotone'}"
    rows = [("model", "full-log AUC", "real-time AUC")]
    fmt = lambda v: "-" if v is None else f"{v:.6f}"
    rows.append((kind, fmt(report.full_auc), fmt(report.realtime_auc)))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def cmd_eval(args) -> int:
    model = _load_model(args.model)
    items = datagen.read_split(_split_dir(Path(args.corpus), "test"), model.alphabet)
    if not items:
        raise DataError(f"{args.corpus}: empty corpus")
    report = evaluate(model, [it.log for it in items], args.mode)
    print(format_report(report, model))
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report.as_dict(), f, indent=1)
    return EXIT_OK


def cmd_score(args) -> int:
    model = _load_model(args.model)
    for path in args.logs:
        log = _read_log(path, model)
        prepared = model.prepare(log)
        score = float(model.score([prepared])[0])
        verdict = ""
        if model.threshold is not None:
            verdict = "\tmalware" if score > model.threshold else "\tbenign"
        print(f"{path}\t{score!r}{verdict}")
        lines = model.encode(log)
        if args.dump_graph:
            Path(args.dump_graph).write_text(to_dot(graph_from_log(lines), model.alphabet, model.vocab))
        if args.dump_patterns:
            ps = model.featurizer.patterns(lines)
            obj = [{"events": [model.alphabet.names[e] for e in k],
                    "args": [[model.vocab.tokens[t] if t < len(model.vocab) else "<OOV>" for t in a]
                             for a in sorted(ps.closure(k))]}
                   for k in ps.keys()]
            Path(args.dump_patterns).write_text(json.dumps(obj, indent=1))
        if args.dump_features:
            F = model.features([prepared])[0]
            Path(args.dump_features).write_text(json.dumps([float(x) for x in F]))
    return EXIT_OK


def cmd_stream(args) -> int:
    model = _load_model(args.model)
    log = _read_log(args.log, model)
    rows = stream_rows(model, log)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["line_index", "score", "delta"])
        for r in rows:
            w.writerow([r.line_index, repr(r.score), repr(r.delta)])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_explain(args) -> int:
    model = _load_model(args.model)
    log = _read_log(args.log, model)
    hits = explain(model, log, top_k=args.top_k)
    if args.json:
        print(json.dumps(hits, indent=1))
        return EXIT_OK
    for rank, h in enumerate(hits, 1):
        print(f"{rank}. line {h['line_index']}  +{h['delta']:.6g}  (score {h['score']:.6g})  "
              f"{h['event']} {' '.join(h['args'])}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="monolog", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("generate", help="write a synthetic labelled corpus")
    g.add_argument("out", help="output directory (gets train/ and test/)")
    g.add_argument("--config", help="generator config (JSON)")
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a model on a corpus")
    t.add_argument("corpus", help="corpus root or split directory")
    t.add_argument("--model", required=True, help="output model path (.json; tensors go to .bin)")
    t.add_argument("--config", help="training config (JSON)")
    t.add_argument("--seed", type=int)
    t.add_argument("--history", help="per-epoch CSV")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="full-log and real-time AUC on a corpus")
    e.add_argument("corpus", help="corpus root (uses test/) or split directory")
    e.add_argument("--model", required=True)
    e.add_argument("--mode", choices=("full", "realtime", "both"), default="both")
    e.add_argument("--out", help="also write the report as JSON")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("score", help="score whole logs")
    s.add_argument("logs", nargs="+")
    s.add_argument("--model", required=True)
    s.add_argument("--dump-graph", help="write the behaviour graph (DOT) of the log")
    s.add_argument("--dump-patterns", help="write the patterns (JSON) of the log")
    s.add_argument("--dump-features", help="write the classifier input vector (JSON)")
    s.set_defaults(func=cmd_score)

    st = sub.add_parser("stream", help="per-line score curve as CSV")
    st.add_argument("log")
    st.add_argument("--model", required=True)
    st.add_argument("--out", help="CSV path (default stdout)")
    st.set_defaults(func=cmd_stream)

    x = sub.add_parser("explain", help="lines with the largest score increase")
    x.add_argument("log")
    x.add_argument("--model", required=True)
    x.add_argument("--top-k", type=int, default=3)
    x.add_argument("--json", action="store_true")
    x.set_defaults(func=cmd_explain)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"monolog: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:      # --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    if getattr(args, "top_k", 1) < 0:
        print("monolog: usage error: --top-k must be nonnegative", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ModelFormatError as e:
        print(f"monolog: model error: {e}", file=sys.stderr)
        return EXIT_MODEL
    except (DataError, ValueError, OSError) as e:
        print(f"monolog: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
