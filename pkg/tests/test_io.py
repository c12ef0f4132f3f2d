import json

import numpy as np
import pytest

from ctxzsl import io as aio
from ctxzsl.baseline import BigramFeatureSet
from ctxzsl.embeddings import ContextSet, EmbeddingMatrix
from ctxzsl.errors import DataError, FormatVersionError, ParseError
from ctxzsl.evaluation import threshold_sweep
from ctxzsl.mlp import TrainConfig, init_model, predict, train
from ctxzsl.space import SemanticSpace, map_document
from ctxzsl.textprep import Corpus, Document, load_corpus, save_corpus
from ctxzsl.tfidf import FeatureSet


def test_corpus_round_trip(tmp_path):
    c = Corpus("c", [Document("a", "Hi there", ["hi", "there"], 1), Document("b", "x", ["x"], 0)])
    back = load_corpus(save_corpus(c, tmp_path / "c.jsonl"))
    assert [(d.id, d.text, d.tokens, d.weak_label) for d in back] == [(d.id, d.text, d.tokens, d.weak_label) for d in c]


def test_features_round_trip(tmp_path):
    fs = FeatureSet([("b", 0.1 + 0.2), ("a", 1e-17)], 1000, {"averaging": "containing"})
    back = aio.load_features(aio.save_features(fs, tmp_path / "f.json"))
    assert back.features == fs.features and back.n_requested == 1000 and back.meta == fs.meta


def test_embeddings_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    emb = EmbeddingMatrix(["x", "y", "z"], rng.normal(size=(3, 4)), 2, 7, {"dim": 4}, [1.5, 1.2])
    back = aio.load_embeddings(aio.save_embeddings(emb, tmp_path / "e.jsonl"))
    assert back.words == emb.words and back.vectors.tobytes() == emb.vectors.tobytes()
    assert (back.seed, back.min_count, back.loss_history) == (7, 2, [1.5, 1.2])


def test_space_round_trip(tmp_path):
    space = SemanticSpace(["p"], {"p": 0.5}, {"p": ContextSet("p", [("q", 0.8), ("r", 0.7)])}, 4, "span",
                          ["gone"], {"m": 2})
    back = aio.load_space(aio.save_space(space, tmp_path / "s.json"))
    toks = ["q", "p", "r", "p"]
    assert map_document(toks, back).values.tobytes() == map_document(toks, space).values.tobytes()
    assert (back.window, back.window_mode, back.dropped) == (4, "span", ["gone"])


def test_bigram_round_trip(tmp_path):
    bf = BigramFeatureSet([(("a", "b"), 4), (("c", "d"), 2)], 163, {"available": 2})
    back = aio.load_bigram_features(aio.save_bigram_features(bf, tmp_path / "b.json"))
    assert back.bigrams == bf.bigrams and back.k == 163


def test_vectors_round_trip(tmp_path):
    vs = aio.VectorSet(["a", "b"], np.array([[0.1, 1 / 3], [2.0, 0.0]]), [1, None], "semantic", "pos")
    back = aio.load_vectors(aio.save_vectors(vs, tmp_path / "v.jsonl"))
    assert back.values.tobytes() == vs.values.tobytes() and back.labels == [1, None] and back.ids == vs.ids


def test_model_round_trip_predictions(tmp_path):
    rng = np.random.default_rng(0)
    model, run = train(rng.normal(1, size=(30, 5)), rng.normal(-1, size=(30, 5)), TrainConfig(max_epochs=3))
    path = aio.save_model(model, tmp_path / "m.json", {"lr": 0.0012}, {"best_epoch": run.best_epoch})
    back, extra = aio.load_model(path)
    probe = rng.normal(size=(17, 5))
    assert predict(back, probe).tobytes() == predict(model, probe).tobytes()
    assert extra["adam"] == {"lr": 0.0012}
    assert back.layout == model.layout


def test_report_round_trip(tmp_path):
    rep = threshold_sweep([0.9, 0.2, 0.6, 0.1], [1, 0, 0, 1], subsets=["a", "a", "b", "b"])
    rep.extra["median"] = 0.4
    back = aio.load_report(aio.save_report(rep, tmp_path / "r.json"))
    assert back.to_dict() == rep.to_dict()


def test_probs_round_trip(tmp_path):
    p = np.array([0.1, 1 / 7])
    ids, back, subsets = aio.load_probs(aio.save_probs(["a", "b"], p, tmp_path / "p.jsonl", ["s", "t"]))
    assert ids == ["a", "b"] and back.tobytes() == p.tobytes() and subsets == ["s", "t"]


def vectors_file(tmp_path):
    vs = aio.VectorSet(["a", "b", "c"], np.ones((3, 2)), [1, 0, 1])
    return aio.save_vectors(vs, tmp_path / "v.jsonl")


def test_truncated_jsonl_reports_offset(tmp_path):
    path = vectors_file(tmp_path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-7])
    with pytest.raises(ParseError, match=r"byte offset \d+") as exc:
        aio.load_vectors(path)
    assert exc.value.offset <= len(raw) - 7


def test_missing_record_detected(tmp_path):
    path = vectors_file(tmp_path)
    lines = path.read_bytes().splitlines(keepends=True)
    path.write_bytes(b"".join(lines[:-1]))
    with pytest.raises(ParseError, match="expected 3 records"):
        aio.load_vectors(path)


def test_truncated_json_reports_offset(tmp_path):
    path = aio.save_features(FeatureSet([("a", 0.5)], 10), tmp_path / "f.json")
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(ParseError) as exc:
        aio.load_features(path)
    assert 0 < exc.value.offset <= len(raw) // 2


def test_newer_version_rejected(tmp_path):
    path = aio.save_features(FeatureSet([("a", 0.5)], 10), tmp_path / "f.json")
    obj = json.loads(path.read_text())
    obj["version"] = aio.FORMAT_VERSION + 1
    path.write_text(json.dumps(obj))
    with pytest.raises(FormatVersionError, match="version"):
        aio.load_features(path)
    vpath = vectors_file(tmp_path)
    lines = vpath.read_text().splitlines()
    head = json.loads(lines[0])
    head["version"] = 99
    vpath.write_text("\n".join([json.dumps(head), *lines[1:]]) + "\n")
    with pytest.raises(FormatVersionError):
        aio.load_vectors(vpath)


def test_wrong_kind_and_missing(tmp_path):
    path = aio.save_features(FeatureSet([("a", 0.5)], 10), tmp_path / "f.json")
    with pytest.raises(DataError, match="space"):
        aio.load_space(path)
    with pytest.raises(DataError, match="not found"):
        aio.load_model(tmp_path / "none.json")
