import math

import pytest
from hypothesis import given, strategies as st

from ctxzsl.errors import DataError
from ctxzsl.tfidf import (
    TfidfTable, build_tfidf_table, select_features, tfidf_weight, top_n_terms,
)
from ctxzsl.textprep import Corpus, Document

from oracles import tfidf_means


def corpus_of(*token_lists, name="c"):
    return Corpus(name, [Document(f"d{i}", " ".join(t), list(t)) for i, t in enumerate(token_lists)])


def test_weight_hand_value():
    # n=4, df=1, 10-token document with the term twice
    doc = ["x", "x"] + [f"f{i}" for i in range(8)]
    c = corpus_of(doc, ["a"], ["b"], ["c"])
    t = build_tfidf_table(c)
    assert tfidf_weight("x", c.documents[0], t) == pytest.approx(0.277259, abs=5e-7)
    assert tfidf_weight("x", c.documents[0], t) == pytest.approx(0.2 * math.log(4), rel=1e-15)


def test_weight_zero_when_everywhere_or_absent():
    c = corpus_of(["a", "b"], ["a", "c"])
    t = build_tfidf_table(c)
    assert tfidf_weight("a", c.documents[0], t) == 0.0
    assert tfidf_weight("c", c.documents[0], t) == 0.0


def test_weight_empty_doc():
    c = corpus_of(["a"])
    with pytest.raises(DataError):
        tfidf_weight("a", Document("e", "", []), build_tfidf_table(c))


def test_single_document_all_zero():
    t = build_tfidf_table(corpus_of(["a", "b", "a"]))
    assert set(t.mean_tfidf.values()) == {0.0}


def test_mean_over_containing_docs():
    # idf = ln 2; tf 0.2/ln2 and 0.4/ln2 give weights 0.2 and 0.4 -> mean 0.3
    c = corpus_of(["t"] + ["p"] * 4, ["t", "t"] + ["q"] * 3, ["r"], ["s"])
    t = build_tfidf_table(c)
    assert t.mean_tfidf["t"] == pytest.approx((0.2 + 0.4) / 2 * math.log(2), rel=1e-15)
    t_all = build_tfidf_table(c, "all")
    assert t_all.mean_tfidf["t"] == pytest.approx((0.2 + 0.4) / 4 * math.log(2), rel=1e-15)


def test_vocab_is_union():
    c = corpus_of(["a", "b"], ["b", "c"])
    assert build_tfidf_table(c).vocab == {"a", "b", "c"}


def test_empty_document_listed():
    c = Corpus("c", [Document("ok", "", ["a"]), Document("bad1", "", []), Document("bad2", "", [])])
    with pytest.raises(DataError, match="bad1, bad2"):
        build_tfidf_table(c)


def table(scores):
    return TfidfTable("t", 10, {k: 1 for k in scores}, dict(scores))


def test_top_n():
    assert top_n_terms(table({"a": 0.5, "b": 0.3, "c": 0.1}), 2) == ["a", "b"]
    assert top_n_terms(table({"x": 0.4, "y": 0.4}), 1) == ["x"]
    assert top_n_terms(table({"b": 0.1, "a": 0.2}), 10) == ["a", "b"]
    with pytest.raises(DataError):
        top_n_terms(table({"a": 1.0}), 0)


def test_select_features_set_difference():
    fs = select_features(["flag", "overdose", "pain"], ["pain", "visit"])
    assert fs.words == ["flag", "overdose"]
    fs = select_features(["a", "b"], ["c"])
    assert fs.words == ["a", "b"]
    with pytest.raises(DataError):
        select_features(["a"], ["a"])


def test_select_features_orders_by_positive_weight():
    pos = table({"a": 0.1, "b": 0.9, "c": 0.5, "d": 0.5})
    fs = select_features(["b", "c", "d", "a"], ["c"], pos)
    assert fs.features == [("b", 0.9), ("d", 0.5), ("a", 0.1)]


words = st.sampled_from(list("abcdefghij"))
docs = st.lists(st.lists(words, min_size=1, max_size=15), min_size=1, max_size=20)


@given(docs, st.sampled_from(["containing", "all"]))
def test_matches_bruteforce(token_lists, averaging):
    t = build_tfidf_table(corpus_of(*token_lists), averaging)
    expect = tfidf_means(token_lists, averaging)
    assert t.mean_tfidf.keys() == expect.keys()
    for term, v in expect.items():
        assert abs(t.mean_tfidf[term] - v) <= 1e-12


@given(docs)
def test_table_invariants(token_lists):
    t = build_tfidf_table(corpus_of(*token_lists))
    for term in t.vocab:
        assert 1 <= t.df[term] <= t.n_docs
        assert t.mean_tfidf[term] >= 0
        assert (t.mean_tfidf[term] == 0) == (t.df[term] == t.n_docs)


@given(st.lists(words, unique=True, min_size=1), st.lists(words, unique=True))
def test_selection_disjoint_from_negative(pos, neg):
    if set(pos) <= set(neg):
        with pytest.raises(DataError):
            select_features(pos, neg)
    else:
        assert not set(select_features(pos, neg).words) & set(neg)


@given(docs)
def test_idf_bound_after_adding_full_document(token_lists):
    before = build_tfidf_table(corpus_of(*token_lists))
    full = sorted(before.vocab)
    after = build_tfidf_table(corpus_of(*token_lists, full))
    n = before.n_docs
    for term in before.vocab:
        assert after.idf(term) <= before.idf(term) + math.log((n + 1) / n) + 1e-15
