"""Versioned on-disk formats for every pipeline artifact.

Single-object artifacts (features, space, model, report) are JSON documents;
row-oriented ones (embeddings, vectors, probabilities) are JSON lines whose
first line is a header. Every header carries ``format`` and ``version``.
Floats are written with ``repr`` precision, so a load/save round trip is
bit-exact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .baseline import BigramFeatureSet
from .embeddings import ContextSet, EmbeddingMatrix
from .errors import DataError, FormatVersionError, ParseError
from .evaluation import ConfusionMatrix, MetricsReport, MetricsRow, UNDEFINED
from .mlp import MlpModel
from .space import SemanticSpace
from .tfidf import FeatureSet

FORMAT_VERSION = 1
_PREFIX = "ctxzsl/"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _header(kind: str, /, **extra) -> dict:
    return {"format": _PREFIX + kind, "version": FORMAT_VERSION, **extra}


def _check_header(obj, kind: str, path: Path) -> None:
    if not isinstance(obj, dict) or "format" not in obj or "version" not in obj:
        raise ParseError(path, 0, "missing format header")
    if obj["format"] != _PREFIX + kind:
        raise DataError(f"{path}: expected a {kind!r} artifact, found {obj['format']!r}")
    version = obj["version"]
    if not isinstance(version, int) or version > FORMAT_VERSION:
        raise FormatVersionError(
            f"{path}: {kind} artifact has format version {version}; this build reads version <= {FORMAT_VERSION}")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False)


def _write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dump(obj) + "\n", encoding="ascii")
    return path


def _read_json(path, kind: str) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"artifact not found: {path}")
    raw = path.read_bytes()
    try:
        obj = json.loads(raw.decode("ascii"))
    except UnicodeDecodeError as exc:
        raise ParseError(path, exc.start, "non-ASCII byte") from None
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.pos, exc.msg) from None
    _check_header(obj, kind, path)
    return obj


def _write_jsonl(path, header: dict, rows: Iterator[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="ascii") as fh:
        fh.write(_dump(header) + "\n")
        for row in rows:
            fh.write(_dump(row) + "\n")
    return path


def _read_jsonl(path, kind: str) -> tuple[dict, list[dict]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"artifact not found: {path}")
    raw = path.read_bytes()
    records = []
    offset = 0
    header = None
    for line in raw.splitlines(keepends=True):
        if line.strip():
            if not line.endswith(b"\n"):
                raise ParseError(path, offset + len(line), "truncated record (no line terminator)")
            try:
                obj = json.loads(line.decode("ascii"))
            except UnicodeDecodeError as exc:
                raise ParseError(path, offset + exc.start, "non-ASCII byte") from None
            except json.JSONDecodeError as exc:
                raise ParseError(path, offset + exc.pos, exc.msg) from None
            if header is None:
                _check_header(obj, kind, path)
                header = obj
            else:
                records.append(obj)
        offset += len(line)
    if header is None:
        raise ParseError(path, 0, "empty file")
    expected = header.get("count")
    if expected is not None and expected != len(records):
        raise ParseError(path, len(raw), f"expected {expected} records, found {len(records)}")
    return header, records


# features ------------------------------------------------------------------

def save_features(fs: FeatureSet, path) -> Path:
    rows = [{"word": w, "mean_tfidf": v, "rank": i + 1} for i, (w, v) in enumerate(fs.features)]
    return _write_json(path, _header("features", n_requested=fs.n_requested, meta=fs.meta, features=rows))


def load_features(path) -> FeatureSet:
    obj = _read_json(path, "features")
    rows = sorted(obj["features"], key=lambda r: r["rank"])
    return FeatureSet([(r["word"], r["mean_tfidf"]) for r in rows], obj["n_requested"], obj.get("meta", {}))


# embeddings ----------------------------------------------------------------

def save_embeddings(emb: EmbeddingMatrix, path) -> Path:
    header = _header("embeddings", dim=emb.dim, count=len(emb.words), seed=emb.seed,
                     min_count=emb.min_count, params=emb.params, loss_history=list(emb.loss_history))
    rows = ({"word": w, "vector": emb.vectors[i].tolist()} for i, w in enumerate(emb.words))
    return _write_jsonl(path, header, rows)


def load_embeddings(path) -> EmbeddingMatrix:
    header, rows = _read_jsonl(path, "embeddings")
    vectors = np.array([r["vector"] for r in rows], dtype=np.float64).reshape(len(rows), header["dim"])
    return EmbeddingMatrix([r["word"] for r in rows], vectors, header["min_count"], header["seed"],
                           header.get("params", {}), header.get("loss_history", []))


# semantic space ------------------------------------------------------------

def save_space(space: SemanticSpace, path) -> Path:
    feats = [{"word": f, "mean_tfidf": space.mean_tfidf[f],
              "contexts": [[w, s] for w, s in space.contexts[f].neighbors]} for f in space.features]
    return _write_json(path, _header("space", window=space.window, window_mode=space.window_mode,
                                     dropped=space.dropped, provenance=space.provenance, features=feats))


def load_space(path) -> SemanticSpace:
    obj = _read_json(path, "space")
    feats = obj["features"]
    return SemanticSpace(
        [f["word"] for f in feats],
        {f["word"]: f["mean_tfidf"] for f in feats},
        {f["word"]: ContextSet(f["word"], [(w, s) for w, s in f["contexts"]]) for f in feats},
        obj["window"], obj["window_mode"], obj.get("dropped", []), obj.get("provenance", {}))


# bigram features -----------------------------------------------------------

def save_bigram_features(bf: BigramFeatureSet, path) -> Path:
    rows = [{"bigram": list(bg), "count": c, "rank": i + 1} for i, (bg, c) in enumerate(bf.bigrams)]
    return _write_json(path, _header("bigram-features", k=bf.k, meta=bf.meta, bigrams=rows))


def load_bigram_features(path) -> BigramFeatureSet:
    obj = _read_json(path, "bigram-features")
    rows = sorted(obj["bigrams"], key=lambda r: r["rank"])
    return BigramFeatureSet([((r["bigram"][0], r["bigram"][1]), r["count"]) for r in rows], obj["k"], obj.get("meta", {}))


# vectors -------------------------------------------------------------------

@dataclass
class VectorSet:
    ids: list[str]
    values: np.ndarray
    labels: list[Optional[int]]
    kind: str = "semantic"
    corpus: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.ids)


def save_vectors(vs: VectorSet, path) -> Path:
    dim = int(vs.values.shape[1]) if vs.values.ndim == 2 else 0
    header = _header("vectors", kind=vs.kind, corpus=vs.corpus, dim=dim, count=len(vs.ids), meta=vs.meta)
    rows = ({"id": i, "label": lab, "values": vs.values[r].tolist()}
            for r, (i, lab) in enumerate(zip(vs.ids, vs.labels)))
    return _write_jsonl(path, header, rows)


def load_vectors(path) -> VectorSet:
    header, rows = _read_jsonl(path, "vectors")
    values = np.array([r["values"] for r in rows], dtype=np.float64).reshape(len(rows), header["dim"])
    return VectorSet([r["id"] for r in rows], values, [r.get("label") for r in rows],
                     header["kind"], header.get("corpus", ""), header.get("meta", {}))


# model ---------------------------------------------------------------------

def save_model(model: MlpModel, path, adam: Optional[dict] = None, training: Optional[dict] = None) -> Path:
    obj = _header(
        "model",
        layout=model.layout,
        weights=[w.tolist() for w in model.weights],
        biases=[b.tolist() for b in model.biases],
        dropout=model.dropout,
        activation=model.activation,
        seed=model.seed,
        norm_mean=None if model.norm_mean is None else model.norm_mean.tolist(),
        norm_std=None if model.norm_std is None else model.norm_std.tolist(),
        adam=adam or {},
        training=training or {},
    )
    return _write_json(path, obj)


def load_model(path) -> tuple[MlpModel, dict]:
    obj = _read_json(path, "model")
    layout = obj["layout"]
    weights = [np.array(w, dtype=np.float64).reshape(a, b) for w, a, b in zip(obj["weights"], layout[:-1], layout[1:])]
    biases = [np.array(b, dtype=np.float64) for b in obj["biases"]]
    model = MlpModel(weights, biases, obj["dropout"], obj["seed"], obj["activation"])
    if obj.get("norm_mean") is not None:
        model.norm_mean = np.array(obj["norm_mean"], dtype=np.float64)
        model.norm_std = np.array(obj["norm_std"], dtype=np.float64)
    return model, {"adam": obj.get("adam", {}), "training": obj.get("training", {})}


# probabilities and labels --------------------------------------------------

def save_probs(ids, probs, path, subsets=None, meta: Optional[dict] = None) -> Path:
    subsets = list(subsets) if subsets is not None else [None] * len(ids)
    header = _header("probs", count=len(ids), meta=meta or {})
    rows = ({"id": i, "prob": float(p), "subset": s} for i, p, s in zip(ids, probs, subsets))
    return _write_jsonl(path, header, rows)


def load_probs(path) -> tuple[list[str], np.ndarray, list[Optional[str]]]:
    _, rows = _read_jsonl(path, "probs")
    return [r["id"] for r in rows], np.array([r["prob"] for r in rows], dtype=np.float64), [r.get("subset") for r in rows]


def load_labels(path) -> dict[str, int]:
    """Plain ``{"id": ..., "label": 0|1}`` lines, e.g. a ground-truth file."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"label file not found: {path}")
    labels: dict[str, int] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: malformed label record ({exc.msg})") from None
        if rec.get("label") not in (0, 1) or not isinstance(rec.get("id"), str):
            raise DataError(f"{path}:{lineno}: label records need a string 'id' and a 0/1 'label'")
        labels[rec["id"]] = rec["label"]
    return labels


# reports -------------------------------------------------------------------

def save_report(report: MetricsReport, path) -> Path:
    return _write_json(path, _header("report", **report.to_dict()))


def load_report(path) -> MetricsReport:
    obj = _read_json(path, "report")

    def val(v):
        return None if v == UNDEFINED else v

    rows = []
    for r in obj["rows"]:
        cm = ConfusionMatrix(r["tp"], r["fp"], r["tn"], r["fn"], r["tau"])
        rows.append(MetricsRow(r["subset"], cm, val(r["sensitivity"]), val(r["specificity"]), val(r["ppv"])))
    return MetricsReport(rows, obj.get("auc", {}), obj.get("extra", {}))


def save_json(obj, path, kind: str) -> Path:
    return _write_json(path, _header(kind, **obj))


def load_json(path, kind: str) -> dict:
    return _read_json(path, kind)
