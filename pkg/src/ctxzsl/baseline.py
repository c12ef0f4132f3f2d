"""Bag-of-bigrams comparator.

Features are the ``k`` most frequent positive-corpus bigrams that never occur
in the negative corpus. Documents become raw count vectors over them and go
through the same network and training path as the semantic-space vectors.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .textprep import Corpus

log = logging.getLogger(__name__)

DEFAULT_K = 163

Bigram = tuple[str, str]


@dataclass
class BigramFeatureSet:
    bigrams: list[tuple[Bigram, int]]
    k: int = DEFAULT_K
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.bigrams)

    @property
    def index(self) -> dict[Bigram, int]:
        return {bg: i for i, (bg, _) in enumerate(self.bigrams)}


def extract_bigrams(tokens: Sequence[str]) -> Counter:
    return Counter(zip(tokens, tokens[1:]))


def corpus_bigram_counts(corpus: Corpus) -> Counter:
    total: Counter = Counter()
    for d in corpus.documents:
        total.update(zip(d.tokens, d.tokens[1:]))
    return total


def select_top_unique_bigrams(pos: Corpus, neg: Corpus, k: int = DEFAULT_K) -> BigramFeatureSet:
    pos_counts = corpus_bigram_counts(pos)
    neg_seen = corpus_bigram_counts(neg)
    candidates = [(bg, c) for bg, c in pos_counts.items() if bg not in neg_seen]
    candidates.sort(key=lambda item: (-item[1], item[0]))
    if len(candidates) < k:
        log.warning("only %d unique positive bigrams available (requested %d)", len(candidates), k)
    chosen = candidates[:k]
    return BigramFeatureSet(chosen, k, {"available": len(candidates), "selected": len(chosen)})


def map_document_bigram_counts(tokens: Sequence[str], features: BigramFeatureSet) -> np.ndarray:
    index = features.index
    out = np.zeros(len(features.bigrams))
    for bg in zip(tokens, tokens[1:]):
        i = index.get(bg)
        if i is not None:
            out[i] += 1
    return out


def map_corpus_bigram_counts(token_lists: Sequence[Sequence[str]], features: BigramFeatureSet) -> np.ndarray:
    index = features.index
    out = np.zeros((len(token_lists), len(features.bigrams)))
    for r, toks in enumerate(token_lists):
        for bg in zip(toks, toks[1:]):
            i = index.get(bg)
            if i is not None:
                out[r, i] += 1
    return out
