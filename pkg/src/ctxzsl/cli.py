"""Command-line entry point.

Each pipeline stage is its own subcommand reading and writing artifact files;
``run`` chains them from an INI config. Exit codes: 0 success, 1 usage error,
2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import io as aio
from .baseline import map_corpus_bigram_counts, select_top_unique_bigrams
from .embeddings import train_skipgram
from .errors import ConfigError, DataError, ZslError
from .evaluation import (
    median_probability, roc_curve, threshold_sweep, triage_query, write_report_csv, write_roc_csv,
)
from .mlp import TrainConfig, predict, train
from .pipeline import PipelineConfig, _finite, load_config, parse_config, run_pipeline
from .space import build_semantic_space, map_corpus
from .synth import SynthConfig, generate_labeled_corpora, write_synth
from .textprep import load_corpus, load_lexicon, preprocess_corpus, save_corpus
from .tfidf import build_tfidf_table, select_features, top_n_terms

log = logging.getLogger("ctxzsl")

EXIT_OK, EXIT_USAGE = 0, 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _globals() -> argparse.ArgumentParser:
    # SUPPRESS defaults let the flags appear before or after the subcommand
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                   help="worker threads for embedding training; >1 is not bit-reproducible")
    g.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="INI config file")
    g.add_argument("--out-dir", type=Path, default=argparse.SUPPRESS, help="output directory")
    g.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _globals()
    p = _Parser(prog="ctxzsl", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"ctxzsl {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    c = cmd("prep", "tokenize a raw JSONL corpus")
    c.add_argument("--in", dest="input", type=Path, required=True, help="raw JSONL corpus")
    c.add_argument("-o", "--out", "--output", dest="output", type=Path)
    c.add_argument("--label", type=int, choices=(0, 1), help="weak label for records without one")
    c.add_argument("--lexicon", type=Path, help="word list for splitting run-together words")
    c.add_argument("--no-split", action="store_true", help="do not split concatenated words")

    c = cmd("features", "select feature words by mean TF-IDF")
    c.add_argument("--pos", type=Path, required=True, help="prepared positive corpus")
    c.add_argument("--neg", type=Path, required=True, help="prepared negative corpus")
    c.add_argument("-n", "--n", dest="n", type=int, help="top-n terms per corpus (default 1000)")
    c.add_argument("--averaging", choices=("containing", "all"))
    c.add_argument("-o", "--out", "--output", dest="output", type=Path)

    c = cmd("embed", "train skip-gram embeddings")
    c.add_argument("--corpus", type=Path, required=True, help="prepared positive corpus")
    for flag, typ in (("--dim", int), ("--window", int), ("--epochs", int), ("--negatives", int),
                      ("--min-count", int), ("--lr", float), ("--min-lr", float), ("--subsample", float)):
        c.add_argument(flag, type=typ)
    c.add_argument("-o", "--out", "--output", dest="output", type=Path)

    c = cmd("space", "build the semantic space")
    c.add_argument("--features", type=Path, required=True)
    c.add_argument("--emb", "--embeddings", dest="embeddings", type=Path, required=True)
    c.add_argument("-m", "--m", dest="m", type=int, help="context words per feature (default 50)")
    c.add_argument("--window", type=int)
    c.add_argument("--window-mode", choices=("symmetric", "span"))
    c.add_argument("-o", "--out", "--output", dest="output", type=Path)

    c = cmd("map", "map a prepared corpus into the semantic space")
    c.add_argument("--corpus", type=Path, required=True)
    c.add_argument("--space", type=Path, required=True)
    c.add_argument("--truth", type=Path, help="label file overriding the corpus labels")
    c.add_argument("-o", "--out", "--output", dest="output", type=Path)

    c = cmd("train", "train the classifier on mapped vectors")
    c.add_argument("--pos", type=Path, required=True)
    c.add_argument("--neg", type=Path, required=True)
    c.add_argument("--max-epochs", type=int)
    c.add_argument("--patience", type=int)
    c.add_argument("--batch-size", type=int)
    c.add_argument("-o", "--out", "--output", dest="output", type=Path)

    c = cmd("classify", "score mapped vectors with a trained model")
    c.add_argument("--vectors", type=Path, nargs="+", required=True)
    c.add_argument("--model", type=Path, required=True)
    c.add_argument("-o", "--out", "--output", dest="output", type=Path)

    c = cmd("eval", "threshold metrics and AUC")
    c.add_argument("--probs", type=Path, required=True)
    c.add_argument("--labels", "--truth", dest="truth", type=Path, nargs="+", required=True,
                   help="label files ({id, label} lines; prepared corpora qualify)")
    c.add_argument("--taus", type=str, help="comma-separated thresholds")
    c.add_argument("--roc", type=Path, help="also write ROC points here")
    c.add_argument("-o", "--out", "--output", dest="output", type=Path)

    c = cmd("triage", "list documents containing the base string with high probability")
    c.add_argument("--corpus", type=Path, required=True)
    c.add_argument("--probs", type=Path, required=True)
    c.add_argument("--base", type=str)
    c.add_argument("--tau", type=float)
    c.add_argument("-o", "--out", "--output", dest="output", type=Path)

    c = cmd("synth", "generate a synthetic benchmark")
    c.add_argument("--synth-config", type=Path,
                   help="JSON file of generator settings (--config is accepted as an alias)")
    c.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one generator setting (JSON value)")

    c = cmd("run", "run the full pipeline from a config")
    c.add_argument("--baseline", action="store_true", help="also run the bigram baseline")

    c = cmd("baseline-features", "select unique positive bigrams")
    c.add_argument("--pos", type=Path, required=True)
    c.add_argument("--neg", type=Path, required=True)
    c.add_argument("-k", "--k", dest="k", type=int, help="number of bigrams (default 163)")
    c.add_argument("-o", "--out", "--output", dest="output", type=Path)

    c = cmd("baseline-map", "map a prepared corpus to bigram count vectors")
    c.add_argument("--corpus", type=Path, required=True)
    c.add_argument("--features", type=Path, required=True)
    c.add_argument("--truth", type=Path)
    c.add_argument("-o", "--out", "--output", dest="output", type=Path)
    return p


# helpers ----------------------------------------------------------------------

def _config(args) -> PipelineConfig:
    path = getattr(args, "config", None)
    if path is None:
        return parse_config("", require_data=False)
    return load_config(path, require_data=False)


def _pick(cli_value, default):
    return default if cli_value is None else cli_value


def _seed(args, cfg: PipelineConfig, section: Optional[str] = None) -> int:
    if hasattr(args, "seed"):
        return args.seed
    return cfg.seed_for(section) if section else cfg["run"]["seed"]


def _out(args, default_name: str) -> Path:
    if args.output is not None:
        return args.output
    return getattr(args, "out_dir", Path(".")) / default_name


def _vector_labels(corpus, truth_path):
    if truth_path is None:
        return [d.weak_label for d in corpus.documents]
    truth = aio.load_labels(truth_path)
    return [truth.get(d.id, d.weak_label) for d in corpus.documents]


def _prepared(path: Path):
    corpus = load_corpus(path)
    empty = [d.id for d in corpus.documents if not d.tokens]
    if len(empty) == len(corpus.documents):
        raise DataError(f"{path}: no tokens found; run 'ctxzsl prep' first")
    return corpus


def _say(msg: str) -> None:
    print(msg)


# subcommands ----------------------------------------------------------------

def cmd_prep(args, cfg):
    corpus = load_corpus(args.input, args.label)
    if args.no_split:
        lexicon = set()
    elif args.lexicon is not None:
        lexicon = load_lexicon(args.lexicon)
    elif cfg["prep"]["lexicon"] is not None:
        lexicon = load_lexicon(cfg["prep"]["lexicon"])
    else:
        lexicon = None if cfg["prep"]["split_concatenations"] else set()
    out = save_corpus(preprocess_corpus(corpus, lexicon), _out(args, f"{args.input.stem}.prep.jsonl"))
    _say(f"wrote {out} ({len(corpus)} documents)")


def cmd_features(args, cfg):
    fc = cfg["features"]
    n = _pick(args.n, fc["n"])
    averaging = _pick(args.averaging, fc["averaging"])
    tp = build_tfidf_table(_prepared(args.pos), averaging)
    tn = build_tfidf_table(_prepared(args.neg), averaging)
    fs = select_features(top_n_terms(tp, n), top_n_terms(tn, n), tp, n)
    fs.meta = {"pos_corpus": args.pos.name, "neg_corpus": args.neg.name, "averaging": averaging}
    out = aio.save_features(fs, _out(args, "features.json"))
    _say(f"wrote {out} ({len(fs)} feature words)")


def cmd_embed(args, cfg):
    ec = cfg["embed"]
    emb = train_skipgram(
        _prepared(args.corpus),
        dim=_pick(args.dim, ec["dim"]), window=_pick(args.window, ec["window"]),
        epochs=_pick(args.epochs, ec["epochs"]), negatives=_pick(args.negatives, ec["negatives"]),
        min_count=_pick(args.min_count, ec["min_count"]), seed=_seed(args, cfg, "embed"),
        lr=_pick(args.lr, ec["lr"]), min_lr=_pick(args.min_lr, ec["min_lr"]),
        subsample=_pick(args.subsample, ec["subsample"]),
        threads=getattr(args, "threads", cfg["run"]["threads"]))
    out = aio.save_embeddings(emb, _out(args, "embeddings.jsonl"))
    _say(f"wrote {out} ({len(emb.words)} words, dim {emb.dim})")


def cmd_space(args, cfg):
    sc = cfg["space"]
    space = build_semantic_space(aio.load_features(args.features), aio.load_embeddings(args.embeddings),
                                 _pick(args.m, sc["m"]), _pick(args.window, sc["window"]),
                                 _pick(args.window_mode, sc["window_mode"]))
    out = aio.save_space(space, _out(args, "space.json"))
    _say(f"wrote {out} ({space.dim} dimensions, {len(space.dropped)} dropped)")


def cmd_map(args, cfg):
    corpus = _prepared(args.corpus)
    space = aio.load_space(args.space)
    vs = aio.VectorSet(corpus.ids, map_corpus(corpus.token_lists(), space, corpus.ids),
                       _vector_labels(corpus, args.truth), "semantic", corpus.name)
    out = aio.save_vectors(vs, _out(args, f"{corpus.name}.vectors.jsonl"))
    _say(f"wrote {out} ({len(vs)} x {space.dim})")


def cmd_train(args, cfg):
    tc = cfg["train"]
    pos, neg = aio.load_vectors(args.pos), aio.load_vectors(args.neg)
    if pos.kind != neg.kind:
        raise DataError(f"vector kinds differ: {pos.kind!r} vs {neg.kind!r}")
    config = TrainConfig(split=tuple(tc["split"]), batch_size=_pick(args.batch_size, tc["batch_size"]),
                         max_epochs=_pick(args.max_epochs, tc["max_epochs"]),
                         patience=_pick(args.patience, tc["patience"]), hidden=tuple(tc["hidden"]),
                         dropout=tc["dropout"], lr=tc["lr"], beta1=tc["beta1"], beta2=tc["beta2"],
                         eps=tc["eps"], standardize=tc["standardize"])
    model, run = train(pos.values, neg.values, config, _seed(args, cfg, "train"))
    adam = {"lr": config.lr, "beta1": config.beta1, "beta2": config.beta2, "eps": config.eps}
    out = aio.save_model(model, _out(args, "model.json"), adam, _finite(run.summary()))
    _say(f"wrote {out} (best epoch {run.best_epoch}, held-out auc {run.test_metrics.get('auc')})")


def cmd_classify(args, cfg):
    model, _ = aio.load_model(args.model)
    ids, probs, subsets = [], [], []
    for path in args.vectors:
        vs = aio.load_vectors(path)
        if vs.values.shape[1] != model.input_dim:
            raise DataError(f"{path}: vectors have {vs.values.shape[1]} dimensions, model expects {model.input_dim}")
        ids += vs.ids
        probs.append(predict(model, vs.values))
        subsets += [vs.corpus or path.stem] * len(vs)
    p = np.concatenate(probs)
    out = aio.save_probs(ids, p, _out(args, "probs.jsonl"), subsets)
    _say(f"wrote {out} ({len(ids)} probabilities)")


def cmd_eval(args, cfg):
    ids, probs, subsets = aio.load_probs(args.probs)
    truth: dict[str, int] = {}
    for path in args.truth:
        truth.update(aio.load_labels(path))
    missing = [i for i in ids if i not in truth]
    if missing:
        raise DataError(f"no label for {len(missing)} scored document(s), e.g. {missing[0]!r}")
    labels = [truth[i] for i in ids]
    taus = [float(t) for t in args.taus.split(",")] if args.taus else cfg["eval"]["taus"]
    names = [s or "all" for s in subsets]
    report = threshold_sweep(probs, labels, taus, names)
    out = aio.save_report(report, _out(args, "report.json"))
    write_report_csv(report, out.with_suffix(".csv"))
    if args.roc is not None:
        write_roc_csv(roc_curve(probs, labels), args.roc)
    for r in report.rows:
        rec = r.as_record()
        _say(f"{rec['subset']:>12} tau={rec['tau']:<5} sens={rec['sensitivity']} spec={rec['specificity']} ppv={rec['ppv']}")
    for name, v in report.auc.items():
        _say(f"auc {name}: {v}")


def cmd_triage(args, cfg):
    corpus = _prepared(args.corpus)
    ids, probs, _ = aio.load_probs(args.probs)
    by_id = dict(zip(ids, probs))
    missing = [d.id for d in corpus.documents if d.id not in by_id]
    if missing:
        raise DataError(f"no probability for {len(missing)} document(s), e.g. {missing[0]!r}")
    doc_probs = [by_id[d.id] for d in corpus.documents]
    base = _pick(args.base, cfg["data"]["base"])
    tau = _pick(args.tau, cfg["eval"]["triage_tau"])
    hits = triage_query(corpus, doc_probs, base, tau)
    result = {"corpus": corpus.name, "base": base, "tau": tau, "n_documents": len(corpus),
              "median_probability": median_probability(doc_probs), "ids": hits}
    out = aio.save_json(result, _out(args, "triage.json"), "triage")
    _say(f"wrote {out} ({len(hits)} of {len(corpus)} documents selected, median probability "
         f"{result['median_probability']:.4f})")


def cmd_synth(args, cfg):
    data = {}
    source = args.synth_config or getattr(args, "config", None)
    if source is not None:
        try:
            data = json.loads(source.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read {source}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a JSON object of generator settings")
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            data[key] = json.loads(value)
        except json.JSONDecodeError:
            data[key] = value
    if hasattr(args, "seed"):
        data["seed"] = args.seed
    sc = SynthConfig.from_dict(data)
    out_dir = getattr(args, "out_dir", Path("synth"))
    result = generate_labeled_corpora(sc)
    paths = write_synth(result, out_dir)
    ini = out_dir / "pipeline.ini"
    ini.write_text(
        "[data]\npos = train_pos.jsonl\nneg = train_neg.jsonl\n"
        "test_pos = test_pos.jsonl\ntest_neg = test_neg.jsonl\ntruth = truth.jsonl\n"
        f"base = {sc.base_token}\n\n[run]\nseed = {sc.seed}\nout_dir = run\n", encoding="utf-8")
    ok = all(a["ok"] for a in result.audits.values())
    _say(f"wrote {len(paths)} files and {ini} to {out_dir}; audits {'passed' if ok else 'FAILED'}")
    if not ok:
        raise DataError(f"generator audit failed, see {paths['audit']}")


def cmd_run(args, cfg):
    path = getattr(args, "config", None)
    if path is None:
        raise ConfigError("run needs --config")
    full = load_config(path)
    if hasattr(args, "seed"):
        full["run"]["seed"] = args.seed
    if args.baseline:
        full["baseline"]["enabled"] = True
    result = run_pipeline(full, getattr(args, "out_dir", None), getattr(args, "threads", None))
    for name, report in result.reports.items():
        _say(f"{name} auc: {report.auc.get('Combined')}")
    _say(f"manifest: {result.out_dir / 'manifest.json'}")


def cmd_baseline_features(args, cfg):
    bf = select_top_unique_bigrams(_prepared(args.pos), _prepared(args.neg), _pick(args.k, cfg["baseline"]["k"]))
    out = aio.save_bigram_features(bf, _out(args, "baseline_features.json"))
    _say(f"wrote {out} ({len(bf)} bigrams)")


def cmd_baseline_map(args, cfg):
    corpus = _prepared(args.corpus)
    bf = aio.load_bigram_features(args.features)
    vs = aio.VectorSet(corpus.ids, map_corpus_bigram_counts(corpus.token_lists(), bf),
                       _vector_labels(corpus, args.truth), "bigram", corpus.name)
    out = aio.save_vectors(vs, _out(args, f"{corpus.name}.bigram.jsonl"))
    _say(f"wrote {out} ({len(vs)} x {len(bf)})")


COMMANDS = {
    "prep": cmd_prep, "features": cmd_features, "embed": cmd_embed, "space": cmd_space,
    "map": cmd_map, "train": cmd_train, "classify": cmd_classify, "eval": cmd_eval,
    "triage": cmd_triage, "synth": cmd_synth, "run": cmd_run,
    "baseline-features": cmd_baseline_features, "baseline-map": cmd_baseline_map,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    verbosity = getattr(args, "verbose", 0)
    logging.basicConfig(level=logging.DEBUG if verbosity > 1 else logging.INFO if verbosity else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config("", require_data=False) if args.command == "synth" else _config(args)
        if "output" in args and args.output is None and hasattr(args, "out_dir"):
            args.out_dir.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cfg)
    except ZslError as exc:
        print(f"ctxzsl {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
