"""Command-line entry point.

Settings resolve as: built-in defaults < ``--config`` file section < flags.
Every run writes its resolved settings to ``<out>/run.cfg``; passing that
file back through ``--config`` reproduces the run.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .corpus import (
    AbsoluteCap,
    CorpusError,
    LabelDistribution,
    LabelMap,
    Percentile,
    SplitConfig,
    compute_class_weights,
    parse_dataset,
    split_manifest,
)
from .lexicon import DEFAULT_MAX_TOKENS, LexiconError, enrich_aspect, load_lexicon
from .metrics import MetricsError, build_report, confusion_csv, pr_curve_csv, render_report
from .model import PRESETS, Model, ModelError, collate
from .optim import OptimizerError
from .pipeline import PreparedRow, encode_rows, prepare, rows_from_tsv, rows_to_tsv
from .tokenizer import EncodingError, VocabError, build_vocab, encode_pair, load_vocab, tokenize
from .train import TrainConfig, TrainingDiverged, evaluate, train_loop

log = logging.getLogger("aspectforge")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3

SEED_ENV = "ASPECTFORGE_SEED"

# name -> (default, parser)
SETTINGS = {
    "prepare": {
        "dataset": (None, str),
        "lexicon": (None, str),
        "vocab": ("", str),
        "vocab_size": (8000, int),
        "enrich": (True, "bool"),
        "max_tokens": (DEFAULT_MAX_TOKENS, int),
        "length_policy": ("percentile:95", str),
        "train_fraction": (0.8, float),
        "group_by_review": (True, "bool"),
        "label_order": ("-3,-2,-1,0,1,2,3", str),
        "seed": (None, int),
    },
    "train": {
        "preset": ("toy", str),
        "seed": (None, int),
        "lr": (1e-4, float),
        "beta1": (0.9, float),
        "beta2": (0.98, float),
        "eps": (1e-8, float),
        "weight_decay": (0.01, float),
        "batch": (32, int),
        "max_len": (128, int),
        "epochs": (20, int),
        "dropout": (0.1, float),
        "class_weights": (False, "bool"),
    },
    "eval": {
        "checkpoint": ("", str),
        "split": ("test", str),
    },
}


class CliError(Exception):
    pass


def _parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise CliError(f"not a boolean: {v!r}")


def resolve(section: str, args: argparse.Namespace) -> dict:
    """Merge defaults, the config file section and explicit flags."""
    file_values: dict[str, str] = {}
    if getattr(args, "config", None):
        cp = configparser.ConfigParser(interpolation=None)
        if not cp.read(args.config, encoding="utf-8"):
            raise CliError(f"cannot read config {args.config}")
        if cp.has_section(section):
            file_values = dict(cp[section])

    resolved = {}
    for key, (default, kind) in SETTINGS[section].items():
        value = getattr(args, key, None)
        if value is None:
            value = file_values.get(key)
        if value is None and key == "seed":
            value = os.environ.get(SEED_ENV, 42)
        if value is None:
            value = default
        if value is None:
            raise CliError(f"missing required setting --{key.replace('_', '-')}")
        resolved[key] = _parse_bool(value) if kind == "bool" else kind(value)
    return resolved


def _out_dir(args) -> Path:
    out = getattr(args, "out", None)
    if out is None and getattr(args, "config", None):
        cp = configparser.ConfigParser(interpolation=None)
        cp.read(args.config, encoding="utf-8")
        out = cp.get("run", "out", fallback=None)
    if out is None:
        raise CliError("missing required setting --out")
    return Path(out)


def write_snapshot(out: Path, section: str, values: dict) -> None:
    """Record one subcommand's resolved settings in ``<out>/run.cfg``."""
    path = out / "run.cfg"
    cp = configparser.ConfigParser(interpolation=None)
    if path.exists():
        cp.read(path, encoding="utf-8")
    if not cp.has_section("run"):
        cp.add_section("run")
    cp.set("run", "out", str(out))
    if cp.has_section(section):
        cp.remove_section(section)
    cp.add_section(section)
    for k, v in values.items():
        cp.set(section, k, repr(v) if isinstance(v, float) else str(v))
    ordered = configparser.ConfigParser(interpolation=None)
    for name in ["run", *[s for s in SETTINGS if cp.has_section(s)]]:
        ordered[name] = dict(cp[name])
    with path.open("w", encoding="utf-8") as fh:
        ordered.write(fh)


def _length_policy(spec: str):
    kind, _, value = spec.partition(":")
    if kind == "percentile":
        return Percentile(float(value))
    if kind == "cap":
        return AbsoluteCap(int(value))
    raise CliError(f"length policy must be 'percentile:P' or 'cap:N', got {spec!r}")


def _read_rows(path: Path) -> list[PreparedRow]:
    if not path.exists():
        raise CliError(f"{path} not found; run 'aspectforge prepare' first")
    return rows_from_tsv(path.read_text(encoding="utf-8"))


# -- subcommands --------------------------------------------------------------


def cmd_prepare(args) -> int:
    cfg = resolve("prepare", args)
    out = _out_dir(args)
    dataset = Path(cfg["dataset"]).resolve()
    lexicon_path = Path(cfg["lexicon"]).resolve()
    cfg["dataset"], cfg["lexicon"] = str(dataset), str(lexicon_path)
    if cfg["vocab"]:
        cfg["vocab"] = str(Path(cfg["vocab"]).resolve())

    reviews = parse_dataset(dataset.read_bytes())
    lexicon = load_lexicon(lexicon_path.read_bytes())
    prepared = prepare(
        reviews,
        lexicon,
        enrich=cfg["enrich"],
        policy=_length_policy(cfg["length_policy"]),
        split_config=SplitConfig(cfg["train_fraction"], cfg["seed"], cfg["group_by_review"]),
        label_map=LabelMap.loads(cfg["label_order"]),
        max_tokens=cfg["max_tokens"],
    )
    if cfg["vocab"]:
        vocab = load_vocab(Path(cfg["vocab"]).read_bytes())
    else:
        texts = [t for r in prepared.train + prepared.test for t in (r.review, r.auxiliary)]
        vocab = build_vocab(texts, cfg["vocab_size"])

    pdir = out / "prepared"
    pdir.mkdir(parents=True, exist_ok=True)
    (pdir / "train.tsv").write_text(rows_to_tsv(prepared.train), encoding="utf-8")
    (pdir / "test.tsv").write_text(rows_to_tsv(prepared.test), encoding="utf-8")
    (pdir / "split.tsv").write_text(split_manifest(prepared.train_examples, prepared.test_examples), encoding="utf-8")
    (pdir / "vocab.txt").write_bytes(vocab.dumps())
    (pdir / "stats.json").write_text(json.dumps(prepared.statistics, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    write_snapshot(out, "prepare", cfg)
    dist = prepared.statistics["label_distribution"]
    print(f"examples={prepared.statistics['examples']} removed={prepared.removed_count} counts={dist['counts']}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve("train", args)
    out = _out_dir(args)
    pdir = out / "prepared"
    vocab = load_vocab((pdir / "vocab.txt").read_bytes())
    train_rows = _read_rows(pdir / "train.tsv")
    test_rows = _read_rows(pdir / "test.tsv")
    if cfg["preset"] not in PRESETS:
        raise CliError(f"unknown preset {cfg['preset']!r}; choose from {sorted(PRESETS)}")
    model_config = PRESETS[cfg["preset"]](vocab_size=len(vocab), max_len=cfg["max_len"])
    if cfg["dropout"] != model_config.dropout:
        model_config = replace(model_config, dropout=cfg["dropout"])

    train_data = encode_rows(train_rows, vocab, cfg["max_len"])
    eval_data = encode_rows(test_rows, vocab, cfg["max_len"]) if test_rows else None
    weights = None
    if cfg["class_weights"]:
        counts = np.bincount(train_data.labels, minlength=model_config.n_labels)
        weights = tuple(compute_class_weights(LabelDistribution(tuple(int(c) for c in counts), ())))
    train_config = TrainConfig(
        learning_rate=cfg["lr"],
        beta1=cfg["beta1"],
        beta2=cfg["beta2"],
        epsilon=cfg["eps"],
        weight_decay=cfg["weight_decay"],
        batch_size=cfg["batch"],
        epochs=cfg["epochs"],
        seed=cfg["seed"],
        class_weights=weights,
    )
    model = Model(model_config, seed=cfg["seed"])
    cdir = out / "checkpoints"
    rdir = out / "reports"
    cdir.mkdir(parents=True, exist_ok=True)
    rdir.mkdir(parents=True, exist_ok=True)
    write_snapshot(out, "train", cfg)
    meta = {"vocab_digest": vocab.digest(), "label_order": _prepare_label_order(out)}

    try:
        best, history = train_loop(train_data, eval_data, model, train_config)
    except TrainingDiverged as exc:
        checkpoint.save(cdir / "best.ckpt", model_config, exc.params, meta)
        (rdir / "history.csv").write_text(exc.history.to_csv(), encoding="utf-8")
        raise
    checkpoint.save(cdir / "best.ckpt", model_config, best, meta)
    (rdir / "history.csv").write_text(history.to_csv(), encoding="utf-8")

    final = Model(model_config, best)
    data = eval_data if eval_data is not None else train_data
    _, acc, probs = evaluate(final, data)
    report = build_report(data.labels, probs.argmax(axis=1), n_classes=model_config.n_labels)
    print(f"eval_accuracy={acc!r} macro_f1={report.macro.f1!r}")
    return EXIT_OK


def _prepare_label_order(out: Path) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.read(out / "run.cfg", encoding="utf-8")
    return cp.get("prepare", "label_order", fallback=SETTINGS["prepare"]["label_order"][0])


def _load_checkpoint(path: Path, vocab):
    config, params, meta = checkpoint.load(path)
    want = meta.get("vocab_digest")
    if want is not None and want != vocab.digest():
        raise CliError(f"checkpoint expects vocabulary {want} but the vocabulary given is {vocab.digest()}")
    if config.vocab_size != len(vocab):
        raise CliError(f"checkpoint vocab size {config.vocab_size} != vocabulary size {len(vocab)}")
    return Model(config, params), meta


def cmd_eval(args) -> int:
    cfg = resolve("eval", args)
    out = _out_dir(args)
    pdir = out / "prepared"
    vocab = load_vocab((pdir / "vocab.txt").read_bytes())
    ckpt = Path(cfg["checkpoint"]) if cfg["checkpoint"] else out / "checkpoints" / "best.ckpt"
    model, _ = _load_checkpoint(ckpt, vocab)
    if cfg["split"] not in ("train", "test"):
        raise CliError("--split must be 'train' or 'test'")
    rows = _read_rows(pdir / f"{cfg['split']}.tsv")
    data = encode_rows(rows, vocab, model.config.max_len)
    _, _, probs = evaluate(model, data)
    report = build_report(data.labels, probs.argmax(axis=1), probs, n_classes=model.config.n_labels)

    rdir = out / "reports"
    rdir.mkdir(parents=True, exist_ok=True)
    (rdir / "report.json").write_text(render_report(report), encoding="utf-8")
    (rdir / "confusion.csv").write_text(confusion_csv(report.confusion), encoding="utf-8")
    (rdir / "pr_curve.csv").write_text(pr_curve_csv(report.pr_curve), encoding="utf-8")
    write_snapshot(out, "eval", cfg)
    print(f"accuracy={report.accuracy!r} macro_f1={report.macro.f1!r} pr_auc_micro={report.pr_auc_micro!r}")
    return EXIT_OK


def cmd_predict(args) -> int:
    if not args.review.strip() or not args.aspect.strip():
        raise CliError("--review and --aspect must be non-empty")
    ckpt = Path(args.checkpoint)
    vocab_path = Path(args.vocab) if args.vocab else ckpt.resolve().parent.parent / "prepared" / "vocab.txt"
    vocab = load_vocab(vocab_path.read_bytes())
    model, meta = _load_checkpoint(ckpt, vocab)
    label_map = LabelMap.loads(meta.get("label_order", SETTINGS["prepare"]["label_order"][0]))

    auxiliary = args.aspect
    if not args.no_enrich:
        if not args.lexicon:
            raise CliError("--lexicon is required unless --no-enrich is given")
        auxiliary = enrich_aspect(load_lexicon(Path(args.lexicon).read_bytes()), args.aspect, args.max_tokens)
    pair = encode_pair(args.review, auxiliary, vocab, model.config.max_len)
    probs = model.predict_proba(collate([pair], trim=True))[0]
    index = int(probs.argmax())
    if args.verbose:
        text = auxiliary.rendered if not isinstance(auxiliary, str) else auxiliary
        print(f"auxiliary\t{text}")
    print(f"label\t{label_map.to_raw(index)}")
    print(f"class_index\t{index}")
    print("probabilities\t" + " ".join(repr(float(p)) for p in probs))
    return EXIT_OK


def cmd_enrich(args) -> int:
    lexicon = load_lexicon(Path(args.lexicon).read_bytes())
    for line in sys.stdin:
        aspect = line.rstrip("\n")
        if not aspect.strip():
            print()
            continue
        print(enrich_aspect(lexicon, aspect, args.max_tokens).rendered)
    return EXIT_OK


def cmd_tokenize(args) -> int:
    vocab = load_vocab(Path(args.vocab).read_bytes())
    lines = [" ".join(args.text)] if args.text else (l.rstrip("\n") for l in sys.stdin)
    for line in lines:
        print(" ".join(tokenize(line, vocab)))
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aspectforge", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, out=True):
        sp.add_argument("--config", help="read settings from this run.cfg")
        if out:
            sp.add_argument("--out", help="run root directory")
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("prepare", help="parse, filter, split and enrich a dataset")
    common(sp)
    sp.add_argument("--dataset")
    sp.add_argument("--lexicon")
    sp.add_argument("--vocab", help="use this vocabulary instead of building one")
    sp.add_argument("--vocab-size", dest="vocab_size", type=int)
    sp.add_argument("--no-enrich", dest="enrich", action="store_const", const=False)
    sp.add_argument("--max-tokens", dest="max_tokens", type=int)
    sp.add_argument("--length-policy", dest="length_policy", help="percentile:P or cap:N")
    sp.add_argument("--train-fraction", dest="train_fraction", type=float)
    sp.add_argument("--label-order", dest="label_order", help="raw labels for class 0..6, comma separated")
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("train", help="fine-tune a classifier on prepared data")
    common(sp)
    sp.add_argument("--preset", choices=sorted(PRESETS))
    sp.add_argument("--lr", type=float)
    sp.add_argument("--beta1", type=float)
    sp.add_argument("--beta2", type=float)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--weight-decay", dest="weight_decay", type=float)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--max-len", dest="max_len", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--dropout", type=float)
    sp.add_argument("--class-weights", dest="class_weights", action="store_const", const=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="score a checkpoint and write reports")
    common(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--split", choices=("train", "test"))
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("predict", help="classify one review/aspect pair")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--vocab")
    sp.add_argument("--lexicon")
    sp.add_argument("--review", required=True)
    sp.add_argument("--aspect", required=True)
    sp.add_argument("--no-enrich", action="store_true")
    sp.add_argument("--max-tokens", type=int, default=DEFAULT_MAX_TOKENS)
    sp.add_argument("--verbose", action="store_true")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("enrich", help="render auxiliary sentences for aspects read from stdin")
    sp.add_argument("--lexicon", required=True)
    sp.add_argument("--max-tokens", type=int, default=DEFAULT_MAX_TOKENS)
    sp.set_defaults(func=cmd_enrich)

    sp = sub.add_parser("tokenize", help="print WordPiece pieces for text")
    sp.add_argument("--vocab", required=True)
    sp.add_argument("text", nargs="*")
    sp.set_defaults(func=cmd_tokenize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"aspectforge: error[diverged]: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (
        CliError,
        CorpusError,
        LexiconError,
        VocabError,
        EncodingError,
        ModelError,
        MetricsError,
        OptimizerError,
        checkpoint.CheckpointError,
        OSError,
        ValueError,
    ) as exc:
        kind = type(exc).__name__
        msg = str(exc).replace("\n", " ")
        print(f"aspectforge: error[{kind}]: {msg}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
