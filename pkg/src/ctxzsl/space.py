"""Semantic space assembly and document-to-vector mapping.

For every feature word ``x`` a document's value is::

    tfidf(x) * sum(cos(x, y) for each occurrence of x
                             for each context word y of x within the window)

Repeated context words count once per (feature occurrence, context occurrence)
pair. A feature that never occurs yields 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .embeddings import ContextSet, EmbeddingMatrix, top_context_words
from .errors import DataError
from .tfidf import FeatureSet

log = logging.getLogger(__name__)

WINDOW_MODES = ("symmetric", "span")


@dataclass
class SemanticSpace:
    features: list[str]
    mean_tfidf: dict[str, float]
    contexts: dict[str, ContextSet]
    window: int = 5
    window_mode: str = "symmetric"
    dropped: list[str] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self._lookup = None

    @property
    def dim(self) -> int:
        return len(self.features)

    @property
    def reach(self) -> int:
        """Tokens inspected on each side of a feature occurrence."""
        if self.window_mode == "span":
            return max(0, (self.window - 1) // 2)
        return self.window

    def lookup(self) -> dict[str, tuple[int, float, dict[str, float]]]:
        if self._lookup is None:
            self._lookup = {
                f: (i, self.mean_tfidf[f], self.contexts[f].as_dict())
                for i, f in enumerate(self.features)
            }
        return self._lookup


@dataclass
class FeatureVector:
    doc_id: str
    values: np.ndarray


def build_semantic_space(
    features: FeatureSet,
    emb: EmbeddingMatrix,
    m: int = 50,
    window: int = 5,
    window_mode: str = "symmetric",
) -> SemanticSpace:
    if len(features) == 0:
        raise DataError("cannot build a semantic space from an empty feature set")
    if window < 1:
        raise DataError(f"window must be >= 1, got {window}")
    if window_mode not in WINDOW_MODES:
        raise DataError(f"window_mode must be one of {WINDOW_MODES}")
    kept, dropped = [], []
    contexts: dict[str, ContextSet] = {}
    weights: dict[str, float] = {}
    for word, weight in features.features:
        if word not in emb.vocab:
            dropped.append(word)
            continue
        ctx = top_context_words(word, emb, m)
        if not ctx.neighbors:
            dropped.append(word)
            continue
        kept.append(word)
        contexts[word] = ctx
        weights[word] = float(weight)
    if dropped:
        log.warning("dropped %d feature(s) missing from the embedding vocabulary: %s",
                    len(dropped), ", ".join(dropped[:20]))
    if not kept:
        raise DataError("every feature word is missing from the embedding vocabulary")
    provenance = {"embedding_seed": emb.seed, "embedding_params": dict(emb.params), "m": m}
    return SemanticSpace(kept, weights, contexts, window, window_mode, dropped, provenance)


def map_document(tokens: Sequence[str], space: SemanticSpace, doc_id: str = "") -> FeatureVector:
    values = np.zeros(space.dim)
    lookup = space.lookup()
    reach = space.reach
    n = len(tokens)
    sums: dict[int, float] = {}
    for i, tok in enumerate(tokens):
        entry = lookup.get(tok)
        if entry is None:
            continue
        idx, _, ctx = entry
        acc = sums.get(idx, 0.0)
        for j in range(max(0, i - reach), min(n, i + reach + 1)):
            if j != i:
                sim = ctx.get(tokens[j])
                if sim is not None:
                    acc += sim
        sums[idx] = acc
    for idx, acc in sums.items():
        values[idx] = acc * space.mean_tfidf[space.features[idx]]
    return FeatureVector(doc_id, values)


def map_corpus(token_lists: Sequence[Sequence[str]], space: SemanticSpace, ids: Sequence[str] | None = None) -> np.ndarray:
    ids = ids if ids is not None else [""] * len(token_lists)
    out = np.zeros((len(token_lists), space.dim))
    for r, (toks, doc_id) in enumerate(zip(token_lists, ids)):
        out[r] = map_document(toks, space, doc_id).values
    return out
