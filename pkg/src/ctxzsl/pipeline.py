"""Config-driven end-to-end runs with a digest-bearing manifest.

The config is an INI file, one section per module. Unknown sections or keys
are rejected so a misspelt hyperparameter fails loudly. Relative paths are
resolved against the config file's directory.
"""

from __future__ import annotations

import configparser
import json
import logging
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import __version__
from . import io as aio
from .baseline import map_corpus_bigram_counts, select_top_unique_bigrams
from .embeddings import train_skipgram
from .errors import ConfigError, DataError, PipelineError, ZslError
from .evaluation import (
    median_probability, roc_curve, threshold_sweep, triage_query, write_report_csv, write_roc_csv,
)
from .mlp import TrainConfig, predict, train
from .space import build_semantic_space, map_corpus
from .textprep import Corpus, load_corpus, load_lexicon, preprocess_corpus, save_corpus
from .tfidf import build_tfidf_table, select_features, top_n_terms

log = logging.getLogger(__name__)

REQUIRED = object()
STAGES = ("prep", "features", "embed", "space", "map", "train", "classify", "eval")
BASELINE_STAGES = ("baseline-features", "baseline-map", "baseline-train", "baseline-classify", "baseline-eval")


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(" ", "").split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.replace(" ", "").split(",") if x]


def _opt_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in ("", "none") else int(text)


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable, Any]]] = {
    "data": {
        "pos": (Path, REQUIRED), "neg": (Path, REQUIRED),
        "test_pos": (Path, None), "test_neg": (Path, None), "truth": (Path, None),
        "base": (str, "suicid"),
    },
    "prep": {"lexicon": (Path, None), "split_concatenations": (_bool, True)},
    "features": {"n": (int, 1000), "averaging": (str, "containing")},
    "embed": {
        "dim": (int, 300), "window": (int, 5), "epochs": (int, 10), "negatives": (int, 5),
        "min_count": (int, 5), "lr": (float, 0.025), "min_lr": (float, 1e-4),
        "subsample": (float, 0.0), "seed": (_opt_int, None),
    },
    "space": {"m": (int, 50), "window": (int, 5), "window_mode": (str, "symmetric")},
    "train": {
        "hidden": (_ints, [70, 30, 70, 30, 70]), "dropout": (float, 0.5),
        "lr": (float, 0.0012), "beta1": (float, 0.92), "beta2": (float, 0.9992), "eps": (float, 1e-08),
        "batch_size": (int, 64), "max_epochs": (int, 100), "patience": (int, 5),
        "split": (_floats, [0.6, 0.2, 0.2]), "standardize": (_bool, True),
        "docs_per_class": (_opt_int, None), "seed": (_opt_int, None),
    },
    "eval": {"taus": (_floats, [0.15, 0.5, 0.85]), "triage_tau": (float, 0.90), "roc": (_bool, True)},
    "baseline": {"enabled": (_bool, False), "k": (int, 163)},
    "run": {"seed": (int, 0), "threads": (int, 1), "out_dir": (Path, Path("run"))},
}


@dataclass
class PipelineConfig:
    sections: dict[str, dict[str, Any]]
    source: Optional[Path] = None

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.sections[section]

    def seed_for(self, section: str) -> int:
        s = self.sections[section].get("seed")
        return self.sections["run"]["seed"] if s is None else s

    def as_record(self) -> dict:
        def plain(v):
            return str(v) if isinstance(v, Path) else v

        return {sec: {k: plain(v) for k, v in vals.items()} for sec, vals in self.sections.items()}


def parse_config(text: str, base_dir: Path | None = None, source: Optional[Path] = None,
                 require_data: bool = True) -> PipelineConfig:
    """Parse INI text. ``require_data=False`` lets single-stage commands borrow defaults."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    unknown_sections = set(cp.sections()) - set(SCHEMA)
    if unknown_sections:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown_sections))}")
    base_dir = base_dir or Path.cwd()
    out: dict[str, dict[str, Any]] = {}
    for section, keys in SCHEMA.items():
        given = dict(cp[section]) if cp.has_section(section) else {}
        unknown = set(given) - set(keys)
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
        vals: dict[str, Any] = {}
        for key, (conv, default) in keys.items():
            if key in given:
                try:
                    v = conv(given[key])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{section}.{key}: {exc}") from None
                if isinstance(v, Path) and not v.is_absolute():
                    v = base_dir / v
            elif default is REQUIRED:
                if not require_data:
                    vals[key] = None
                    continue
                raise ConfigError(f"missing required config key {section}.{key}")
            else:
                v = default
            vals[key] = v
        out[section] = vals
    cfg = PipelineConfig(out, source)
    _validate(cfg)
    return cfg


def load_config(path, require_data: bool = True) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), path.parent.resolve(), path, require_data)


def _validate(cfg: PipelineConfig) -> None:
    if cfg["features"]["averaging"] not in ("containing", "all"):
        raise ConfigError("features.averaging must be 'containing' or 'all'")
    if cfg["space"]["window_mode"] not in ("symmetric", "span"):
        raise ConfigError("space.window_mode must be 'symmetric' or 'span'")
    split = cfg["train"]["split"]
    if len(split) != 3 or abs(sum(split) - 1.0) > 1e-9 or min(split) < 0:
        raise ConfigError("train.split must be three non-negative fractions summing to 1")
    if (cfg["data"]["test_pos"] is None) != (cfg["data"]["test_neg"] is None):
        raise ConfigError("data.test_pos and data.test_neg must be given together")


@dataclass
class RunResult:
    out_dir: Path
    manifest: dict
    artifacts: dict[str, Path]
    reports: dict[str, Any] = field(default_factory=dict)
    probs: dict[str, np.ndarray] = field(default_factory=dict)


class _Recorder:
    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.stages: list[dict] = []
        self.artifacts: dict[str, Path] = {}

    def digest(self, path: Path) -> dict:
        return {"path": str(path.relative_to(self.out_dir)) if path.is_relative_to(self.out_dir) else str(path),
                "sha256": aio.sha256_file(path)}

    def stage(self, name: str, inputs: dict[str, Path], params: dict, fn: Callable[[], dict[str, Path]]):
        started = time.time()
        stamp = datetime.now(timezone.utc).isoformat()
        try:
            outputs = fn()
        except ZslError as exc:
            self.stages.append({"stage": name, "status": "failed", "error": str(exc), "started": stamp})
            raise PipelineError(name, exc) from exc
        except Exception as exc:  # still record the failing stage for anything unexpected
            self.stages.append({"stage": name, "status": "failed", "error": repr(exc), "started": stamp})
            raise PipelineError(name, exc) from exc
        self.artifacts.update(outputs)
        self.stages.append({
            "stage": name, "status": "ok", "started": stamp,
            "seconds": round(time.time() - started, 3),
            "params": params,
            "inputs": {k: self.digest(p) for k, p in inputs.items()},
            "outputs": {k: self.digest(p) for k, p in outputs.items()},
        })


def _labels_for(corpus: Corpus, truth: Optional[dict[str, int]]) -> list[Optional[int]]:
    if truth is not None:
        return [truth.get(d.id, d.weak_label) for d in corpus.documents]
    return [d.weak_label for d in corpus.documents]


def _balanced_subset(corpus: Corpus, n: int, rng: np.random.Generator) -> Corpus:
    if len(corpus) == n:
        return corpus
    keep = np.sort(rng.choice(len(corpus), size=n, replace=False))
    return Corpus(corpus.name, [corpus.documents[i] for i in keep], corpus.label)


def _finite(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.generic):
        return _finite(obj.item())
    return obj


def run_pipeline(config: PipelineConfig | str | Path, out_dir: Optional[Path] = None,
                 threads: Optional[int] = None) -> RunResult:
    """prep -> features -> embed -> space -> map -> train -> classify -> eval.

    With ``baseline.enabled`` the bigram comparator runs afterwards on the
    same prepared corpora and training selection.
    """
    cfg = config if isinstance(config, PipelineConfig) else load_config(config)
    out = Path(out_dir) if out_dir is not None else cfg["run"]["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    out = out.resolve()
    threads = threads if threads is not None else cfg["run"]["threads"]
    rec = _Recorder(out)
    data = cfg["data"]
    has_test = data["test_pos"] is not None
    state: dict[str, Any] = {}
    result = RunResult(out, {}, rec.artifacts)
    started = datetime.now(timezone.utc).isoformat()

    try:
        _run_stages(cfg, rec, state, result, out, threads, has_test)
        status = "ok"
        failure = None
    except PipelineError as exc:
        status = "failed"
        failure = {"stage": exc.stage, "error": str(exc.cause)}
        _write_manifest(cfg, rec, out, started, status, failure, threads)
        raise
    result.manifest = _write_manifest(cfg, rec, out, started, status, failure, threads)
    return result


def _write_manifest(cfg, rec: _Recorder, out: Path, started: str, status: str, failure, threads) -> dict:
    manifest = {
        "tool": "ctxzsl",
        "tool_version": __version__,
        "status": status,
        "failure": failure,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "seeds": {"run": cfg["run"]["seed"], "embed": cfg.seed_for("embed"), "train": cfg.seed_for("train")},
        "threads": threads,
        "deterministic": threads <= 1,
        "config": cfg.as_record(),
        "stages": rec.stages,
    }
    if status != "ok":
        manifest["partial_artifacts"] = sorted(rec.artifacts)
    path = out / "manifest.json"
    path.write_text(json.dumps(_finite(manifest), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def _run_stages(cfg, rec: _Recorder, state: dict, result: RunResult, out: Path, threads: int, has_test: bool):
    data = cfg["data"]
    roles = {"pos": data["pos"], "neg": data["neg"]}
    if has_test:
        roles.update(test_pos=data["test_pos"], test_neg=data["test_neg"])
    label_for_role = {"pos": 1, "neg": 0}

    def do_prep():
        lexicon = None
        if cfg["prep"]["lexicon"] is not None:
            lexicon = load_lexicon(cfg["prep"]["lexicon"])
        elif not cfg["prep"]["split_concatenations"]:
            lexicon = set()
        outputs = {}
        corpora = {}
        for role, path in roles.items():
            c = load_corpus(path, label_for_role.get(role), name=role)
            c = preprocess_corpus(c, lexicon)
            corpora[role] = c
            outputs[f"corpus_{role}"] = save_corpus(c, out / "corpora" / f"{role}.prep.jsonl")
        state["corpora"] = corpora
        return outputs

    inputs = {f"raw_{r}": p for r, p in roles.items()}
    if cfg["prep"]["lexicon"] is not None:
        inputs["lexicon"] = cfg["prep"]["lexicon"]
    rec.stage("prep", inputs, {"split_concatenations": cfg["prep"]["split_concatenations"]}, do_prep)
    corpora: dict[str, Corpus] = state["corpora"]

    fcfg = cfg["features"]

    def do_features():
        tp = build_tfidf_table(corpora["pos"], fcfg["averaging"])
        tn = build_tfidf_table(corpora["neg"], fcfg["averaging"])
        fs = select_features(top_n_terms(tp, fcfg["n"]), top_n_terms(tn, fcfg["n"]), tp, fcfg["n"])
        fs.meta = {"pos_corpus": "pos", "neg_corpus": "neg", "averaging": fcfg["averaging"]}
        state["features"] = fs
        return {"features": aio.save_features(fs, out / "features.json")}

    rec.stage("features", {"corpus_pos": rec.artifacts["corpus_pos"], "corpus_neg": rec.artifacts["corpus_neg"]},
              dict(fcfg), do_features)

    ecfg = cfg["embed"]
    eseed = cfg.seed_for("embed")

    def do_embed():
        emb = train_skipgram(corpora["pos"], dim=ecfg["dim"], window=ecfg["window"], epochs=ecfg["epochs"],
                             negatives=ecfg["negatives"], min_count=ecfg["min_count"], seed=eseed,
                             lr=ecfg["lr"], min_lr=ecfg["min_lr"], subsample=ecfg["subsample"], threads=threads)
        state["emb"] = emb
        return {"embeddings": aio.save_embeddings(emb, out / "embeddings.jsonl")}

    rec.stage("embed", {"corpus_pos": rec.artifacts["corpus_pos"]}, {**ecfg, "seed": eseed, "threads": threads}, do_embed)

    scfg = cfg["space"]

    def do_space():
        space = build_semantic_space(state["features"], state["emb"], scfg["m"], scfg["window"], scfg["window_mode"])
        space.provenance.update({"pos_corpus": str(data["pos"].name), "neg_corpus": str(data["neg"].name)})
        state["space"] = space
        return {"space": aio.save_space(space, out / "space.json")}

    rec.stage("space", {"features": rec.artifacts["features"], "embeddings": rec.artifacts["embeddings"]},
              dict(scfg), do_space)

    truth = aio.load_labels(data["truth"]) if data["truth"] is not None else None
    tcfg = cfg["train"]
    tseed = cfg.seed_for("train")
    n_per_class = tcfg["docs_per_class"] or min(len(corpora["pos"]), len(corpora["neg"]))
    if n_per_class > min(len(corpora["pos"]), len(corpora["neg"])):
        raise PipelineError("train", DataError(
            f"train.docs_per_class={n_per_class} exceeds corpus sizes {len(corpora['pos'])}/{len(corpora['neg'])}"))
    pick = np.random.default_rng([tseed, 7])
    train_corpora = {"pos": _balanced_subset(corpora["pos"], n_per_class, pick),
                     "neg": _balanced_subset(corpora["neg"], n_per_class, pick)}

    def vector_sets(kind: str, mapper) -> dict[str, aio.VectorSet]:
        sets = {}
        for role in roles:
            c = train_corpora[role] if role in train_corpora else corpora[role]
            labels = _labels_for(c, truth if role.startswith("test") else None)
            sets[role] = aio.VectorSet(c.ids, mapper(c), labels, kind, role)
        return sets

    def do_map():
        sets = vector_sets("semantic", lambda c: map_corpus(c.token_lists(), state["space"], c.ids))
        state["vectors"] = sets
        return {f"vectors_{r}": aio.save_vectors(vs, out / "vectors" / f"{r}.vectors.jsonl") for r, vs in sets.items()}

    rec.stage("map", {"space": rec.artifacts["space"], **{f"corpus_{r}": rec.artifacts[f"corpus_{r}"] for r in roles}},
              {"docs_per_class": n_per_class}, do_map)

    tconf = TrainConfig(split=tuple(tcfg["split"]), batch_size=tcfg["batch_size"], max_epochs=tcfg["max_epochs"],
                        patience=tcfg["patience"], hidden=tuple(tcfg["hidden"]), dropout=tcfg["dropout"],
                        lr=tcfg["lr"], beta1=tcfg["beta1"], beta2=tcfg["beta2"], eps=tcfg["eps"],
                        standardize=tcfg["standardize"])
    ev = cfg["eval"]

    def run_branch(prefix: str, vec_key: str, model_name: str):
        def do_train():
            sets = state[vec_key]
            model, run = train(sets["pos"].values, sets["neg"].values, tconf, tseed)
            state[prefix + "model"] = model
            state[prefix + "run"] = run
            adam = {"lr": tconf.lr, "beta1": tconf.beta1, "beta2": tconf.beta2, "eps": tconf.eps}
            training = _finite(run.summary())
            return {prefix + "model": aio.save_model(model, out / model_name, adam, training)}

        name = (prefix.replace("_", "-")) if prefix else ""
        rec.stage(f"{name}train", {f"vectors_{r}": rec.artifacts[f"{prefix}vectors_{r}"] for r in ("pos", "neg")},
                  {**tconf.to_dict(), "seed": tseed}, do_train)

        def do_classify():
            model = state[prefix + "model"]
            sets = state[vec_key]
            if has_test:
                ids, probs, subsets, labels = [], [], [], []
                for role in ("test_pos", "test_neg"):
                    vs = sets[role]
                    ids += vs.ids
                    probs.append(predict(model, vs.values))
                    subsets += [role] * len(vs)
                    labels += vs.labels
                p = np.concatenate(probs)
            else:
                run = state[prefix + "run"]
                test_idx = run.partitions["test"]
                n_pos = len(sets["pos"])
                X = np.vstack([sets["pos"].values, sets["neg"].values])
                all_ids = sets["pos"].ids + sets["neg"].ids
                all_labels = sets["pos"].labels + sets["neg"].labels
                p = predict(model, X[test_idx])
                ids = [all_ids[i] for i in test_idx]
                labels = [all_labels[i] for i in test_idx]
                subsets = ["heldout_pos" if i < n_pos else "heldout_neg" for i in test_idx]
            state[prefix + "probs"] = (ids, p, subsets, labels)
            result.probs[prefix.rstrip("_") or "zsl"] = p
            return {prefix + "probs": aio.save_probs(ids, p, out / f"{prefix}probs.jsonl", subsets)}

        rec.stage(f"{name}classify", {prefix + "model": rec.artifacts[prefix + "model"],
                                      **({f"vectors_{r}": rec.artifacts[f"{prefix}vectors_{r}"] for r in ("test_pos", "test_neg")}
                                         if has_test else {})},
                  {}, do_classify)

        def do_eval():
            ids, p, subsets, labels = state[prefix + "probs"]
            missing = [i for i, lab in zip(ids, labels) if lab is None]
            if missing:
                raise DataError(f"no ground-truth label for {len(missing)} document(s), e.g. {missing[0]!r}")
            report = threshold_sweep(p, labels, ev["taus"], subsets)
            outputs = {}
            if has_test:
                neg_probs = [pr for pr, s in zip(p, subsets) if s == "test_neg"]
                report.extra["median_prob_test_neg"] = median_probability(neg_probs)
                triage = triage_query(corpora["test_neg"], neg_probs, data["base"], ev["triage_tau"])
                report.extra["triage"] = {"corpus": "test_neg", "base": data["base"],
                                          "tau": ev["triage_tau"], "ids": triage}
            result.reports[prefix.rstrip("_") or "zsl"] = report
            outputs[prefix + "report"] = aio.save_report(report, out / f"{prefix}report.json")
            outputs[prefix + "report_csv"] = write_report_csv(report, out / f"{prefix}report.csv")
            if ev["roc"] and report.auc.get("Combined") is not None:
                outputs[prefix + "roc"] = write_roc_csv(roc_curve(p, labels), out / f"{prefix}roc.csv")
            return outputs

        rec.stage(f"{name}eval", {prefix + "probs": rec.artifacts[prefix + "probs"]}
                  | ({"truth": data["truth"]} if data["truth"] is not None else {}),
                  {"taus": ev["taus"], "triage_tau": ev["triage_tau"], "base": data["base"]}, do_eval)

    run_branch("", "vectors", "model.json")

    if cfg["baseline"]["enabled"]:
        k = cfg["baseline"]["k"]

        def do_bfeatures():
            bf = select_top_unique_bigrams(corpora["pos"], corpora["neg"], k)
            state["bigrams"] = bf
            return {"baseline_features": aio.save_bigram_features(bf, out / "baseline_features.json")}

        rec.stage("baseline-features", {"corpus_pos": rec.artifacts["corpus_pos"], "corpus_neg": rec.artifacts["corpus_neg"]},
                  {"k": k}, do_bfeatures)

        def do_bmap():
            sets = vector_sets("bigram", lambda c: map_corpus_bigram_counts(c.token_lists(), state["bigrams"]))
            state["baseline_vectors"] = sets
            return {f"baseline_vectors_{r}": aio.save_vectors(vs, out / "vectors" / f"{r}.bigram.jsonl")
                    for r, vs in sets.items()}

        rec.stage("baseline-map", {"baseline_features": rec.artifacts["baseline_features"]}, {}, do_bmap)
        run_branch("baseline_", "baseline_vectors", "baseline_model.json")
