"""Per-corpus TF-IDF statistics and feature-word selection.

Weights follow ``tf * ln(n / df)`` with ``tf`` the relative frequency of the
term in the document. A term's corpus score is its mean weight, by default
over the documents that contain it (``averaging="containing"``); pass
``averaging="all"`` to divide by the corpus size instead.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import DataError
from .textprep import Corpus, Document

AVERAGING_MODES = ("containing", "all")


@dataclass
class TfidfTable:
    corpus_name: str
    n_docs: int
    df: dict[str, int]
    mean_tfidf: dict[str, float]
    averaging: str = "containing"

    @property
    def vocab(self) -> set[str]:
        return set(self.df)

    def idf(self, term: str) -> float:
        return math.log(self.n_docs / self.df[term])


@dataclass
class FeatureSet:
    features: list[tuple[str, float]]
    n_requested: int = 1000
    meta: dict = field(default_factory=dict)

    @property
    def words(self) -> list[str]:
        return [w for w, _ in self.features]

    def weight(self, word: str) -> float:
        return dict(self.features)[word]

    def __len__(self) -> int:
        return len(self.features)


def tfidf_weight(term: str, doc: Document, table: TfidfTable) -> float:
    if not doc.tokens:
        raise DataError(f"document {doc.id!r} is empty; relative term frequency undefined")
    count = doc.tokens.count(term)
    if count == 0:
        return 0.0
    if term not in table.df:
        raise DataError(f"term {term!r} occurs in {doc.id!r} but not in table {table.corpus_name!r}")
    return (count / len(doc.tokens)) * table.idf(term)


def build_tfidf_table(corpus: Corpus, averaging: str = "containing") -> TfidfTable:
    if averaging not in AVERAGING_MODES:
        raise DataError(f"averaging must be one of {AVERAGING_MODES}, got {averaging!r}")
    empty = [d.id for d in corpus.documents if not d.tokens]
    if empty:
        shown = ", ".join(empty[:10]) + (" ..." if len(empty) > 10 else "")
        raise DataError(f"corpus {corpus.name!r} has {len(empty)} empty document(s): {shown}")
    n = len(corpus.documents)
    if n == 0:
        raise DataError(f"corpus {corpus.name!r} has no documents")

    per_doc = []
    df: Counter = Counter()
    for d in corpus.documents:
        counts = Counter(d.tokens)
        per_doc.append((counts, len(d.tokens)))
        df.update(counts.keys())

    idf = {t: math.log(n / c) for t, c in df.items()}
    totals: dict[str, float] = dict.fromkeys(df, 0.0)
    for counts, length in per_doc:
        for term, c in counts.items():
            totals[term] += (c / length) * idf[term]
    if averaging == "containing":
        mean = {t: totals[t] / df[t] for t in df}
    else:
        mean = {t: totals[t] / n for t in df}
    return TfidfTable(corpus.name, n, dict(df), mean, averaging)


def rank_terms(table: TfidfTable) -> list[str]:
    return sorted(table.mean_tfidf, key=lambda t: (-table.mean_tfidf[t], t))


def top_n_terms(table: TfidfTable, n: int) -> list[str]:
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    return rank_terms(table)[:n]


def select_features(
    top_pos: Iterable[str],
    top_neg: Iterable[str],
    pos_table: Optional[TfidfTable] = None,
    n_requested: Optional[int] = None,
) -> FeatureSet:
    """Words in the positive top-n list that are absent from the negative one.

    Order follows ``top_pos``; weights come from ``pos_table`` when given.
    """
    top_pos = list(top_pos)
    excluded = set(top_neg)
    kept = [w for w in top_pos if w not in excluded]
    if not kept:
        raise DataError("feature selection is empty: every positive top-n term is also a negative top-n term")
    if pos_table is not None:
        pairs = [(w, pos_table.mean_tfidf[w]) for w in kept]
        pairs.sort(key=lambda p: (-p[1], p[0]))
    else:
        pairs = [(w, float("nan")) for w in kept]
    return FeatureSet(pairs, n_requested if n_requested is not None else len(top_pos))
