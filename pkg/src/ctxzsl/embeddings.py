"""Skip-gram word embeddings trained with negative sampling.

The hot loop is a numba kernel that walks every (center, context) pair inside
a symmetric window and applies plain SGD, the way the original word2vec C
tool does. Randomness (negative draws, optional subsampling) comes from a
64-bit linear congruential generator carried in the kernel state, so a fixed
seed gives bit-identical vectors in single-threaded mode.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property

import numba
import numpy as np

from .errors import DataError
from .textprep import Corpus

log = logging.getLogger(__name__)

_LCG_MUL = np.uint64(25214903917)
_LCG_ADD = np.uint64(11)
_TWO_53 = 9007199254740992.0


@dataclass
class EmbeddingMatrix:
    words: list[str]
    vectors: np.ndarray
    min_count: int = 5
    seed: int = 0
    params: dict = field(default_factory=dict)
    loss_history: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @cached_property
    def vocab(self) -> dict[str, int]:
        return {w: i for i, w in enumerate(self.words)}

    def __contains__(self, word: str) -> bool:
        return word in self.vocab

    def vector(self, word: str) -> np.ndarray:
        return self.vectors[self.vocab[word]]

    @cached_property
    def word_array(self) -> np.ndarray:
        return np.array(self.words, dtype=str)

    @cached_property
    def unit_vectors(self) -> np.ndarray:
        norms = np.linalg.norm(self.vectors, axis=1, keepdims=True)
        return self.vectors / norms


@dataclass
class ContextSet:
    feature: str
    neighbors: list[tuple[str, float]]

    def as_dict(self) -> dict[str, float]:
        return dict(self.neighbors)


@numba.njit(cache=True, inline="always")
def _next_uniform(state):
    state[0] = state[0] * _LCG_MUL + _LCG_ADD
    return float(state[0] >> np.uint64(11)) / _TWO_53


@numba.njit(cache=True)
def _train_docs(syn0, syn1, tokens, offsets, doc_lo, doc_hi, cum_noise, keep_prob,
                window, negatives, lr_start, lr_end, total_words, words_done,
                state, buf, neu1e):
    dim = syn0.shape[1]
    noise_total = cum_noise[-1]
    n_noise = cum_noise.shape[0]
    loss_sum = 0.0
    n_pairs = 0
    for d in range(doc_lo, doc_hi):
        start = offsets[d]
        stop = offsets[d + 1]
        length = 0
        for p in range(start, stop):
            w = tokens[p]
            if keep_prob[w] < 1.0:
                if _next_uniform(state) >= keep_prob[w]:
                    continue
            buf[length] = w
            length += 1
        for i in range(length):
            frac = words_done / total_words
            lr = lr_start - (lr_start - lr_end) * frac
            if lr < lr_end:
                lr = lr_end
            words_done += 1
            center = buf[i]
            vin = syn0[center]
            lo = max(0, i - window)
            hi = min(length, i + window + 1)
            for j in range(lo, hi):
                if j == i:
                    continue
                target = buf[j]
                neu1e[:] = 0.0
                for s in range(negatives + 1):
                    if s == 0:
                        out = target
                        label = 1.0
                    else:
                        u = _next_uniform(state) * noise_total
                        lo_i = 0
                        hi_i = n_noise - 1
                        while lo_i < hi_i:
                            mid = (lo_i + hi_i) >> 1
                            if cum_noise[mid] > u:
                                hi_i = mid
                            else:
                                lo_i = mid + 1
                        out = lo_i
                        if out == target:
                            continue
                        label = 0.0
                    vout = syn1[out]
                    f = 0.0
                    for k in range(dim):
                        f += vin[k] * vout[k]
                    if f > 30.0:
                        sig = 1.0
                    elif f < -30.0:
                        sig = 0.0
                    else:
                        sig = 1.0 / (1.0 + math.exp(-f))
                    # -log(sigmoid(+-f)) for the positive / negative sample
                    if label == 1.0:
                        loss_sum += math.log1p(math.exp(-f)) if f > -30.0 else -f
                    else:
                        loss_sum += math.log1p(math.exp(f)) if f < 30.0 else f
                    g = (label - sig) * lr
                    for k in range(dim):
                        neu1e[k] += g * vout[k]
                    for k in range(dim):
                        vout[k] += g * vin[k]
                for k in range(dim):
                    vin[k] += neu1e[k]
                n_pairs += 1
    return loss_sum, n_pairs, words_done


@numba.njit(cache=True, parallel=True)
def _train_shards(syn0, syn1, tokens, offsets, bounds, cum_noise, keep_prob, window,
                  negatives, lr_start, lr_end, total_words, shard_done, seeds, max_len):
    # Lock-free concurrent updates: results depend on thread scheduling.
    n_shards = bounds.shape[0] - 1
    losses = np.zeros(n_shards)
    pairs = np.zeros(n_shards, dtype=np.int64)
    for s in numba.prange(n_shards):
        state = np.empty(1, dtype=np.uint64)
        state[0] = seeds[s]
        buf = np.empty(max_len, dtype=np.int32)
        neu1e = np.empty(syn0.shape[1])
        scaled_total = total_words / n_shards
        loss, npairs, done = _train_docs(syn0, syn1, tokens, offsets, bounds[s], bounds[s + 1],
                                         cum_noise, keep_prob, window, negatives, lr_start,
                                         lr_end, scaled_total, shard_done[s], state, buf, neu1e)
        losses[s] = loss
        pairs[s] = npairs
        shard_done[s] = done
    return losses.sum(), pairs.sum()


def build_vocab(corpus: Corpus, min_count: int) -> tuple[list[str], np.ndarray]:
    counts = Counter(t for d in corpus.documents for t in d.tokens)
    words = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    return words, np.array([counts[w] for w in words], dtype=np.float64)


def _encode(corpus: Corpus, index: dict[str, int]) -> tuple[np.ndarray, np.ndarray]:
    ids: list[int] = []
    offsets = [0]
    for d in corpus.documents:
        ids.extend(index[t] for t in d.tokens if t in index)
        offsets.append(len(ids))
    return np.asarray(ids, dtype=np.int32), np.asarray(offsets, dtype=np.int64)


def train_skipgram(
    corpus: Corpus,
    dim: int = 300,
    window: int = 5,
    epochs: int = 10,
    negatives: int = 5,
    min_count: int = 5,
    seed: int = 0,
    lr: float = 0.025,
    min_lr: float = 1e-4,
    subsample: float = 0.0,
    threads: int = 1,
) -> EmbeddingMatrix:
    """Train skip-gram vectors on ``corpus``.

    ``subsample`` is the word2vec frequent-word threshold (0 disables it).
    ``threads > 1`` switches to lock-free sharded training, which is faster
    but not reproducible.
    """
    if not corpus.documents:
        raise DataError(f"corpus {corpus.name!r} is empty")
    if dim < 2:
        raise DataError(f"dim must be >= 2, got {dim}")
    if epochs < 1:
        raise DataError(f"epochs must be >= 1, got {epochs}")
    if window < 1 or negatives < 0:
        raise DataError("window must be >= 1 and negatives >= 0")

    words, counts = build_vocab(corpus, min_count)
    if not words:
        raise DataError(f"vocabulary empty after min_count={min_count} filtering")
    index = {w: i for i, w in enumerate(words)}
    tokens, offsets = _encode(corpus, index)
    n_tokens = len(tokens)
    if n_tokens == 0:
        raise DataError("no in-vocabulary tokens to train on")

    noise = counts ** 0.75
    cum_noise = np.cumsum(noise)
    if subsample > 0:
        freq = counts / counts.sum()
        keep = np.minimum(1.0, np.sqrt(subsample / freq) + subsample / freq)
    else:
        keep = np.ones(len(words))

    rng = np.random.default_rng(seed)
    syn0 = (rng.random((len(words), dim)) - 0.5) / dim
    syn1 = np.zeros((len(words), dim))

    total_words = float(n_tokens * epochs)
    max_len = int(np.diff(offsets).max()) if len(offsets) > 1 else 1
    history: list[float] = []
    if threads <= 1:
        state = np.array([np.uint64(seed) ^ np.uint64(0x9E3779B97F4A7C15)], dtype=np.uint64)
        buf = np.empty(max(max_len, 1), dtype=np.int32)
        neu1e = np.empty(dim)
        done = 0
        for epoch in range(epochs):
            loss, pairs, done = _train_docs(syn0, syn1, tokens, offsets, 0, len(offsets) - 1,
                                            cum_noise, keep, window, negatives, lr, min_lr,
                                            total_words, done, state, buf, neu1e)
            history.append(loss / max(pairs, 1))
            log.debug("skipgram epoch %d loss %.5f", epoch + 1, history[-1])
    else:
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
        n_docs = len(offsets) - 1
        bounds = np.linspace(0, n_docs, threads + 1).astype(np.int64)
        seeds = np.random.SeedSequence(seed).generate_state(threads, dtype=np.uint64)
        shard_done = np.zeros(threads, dtype=np.int64)
        for epoch in range(epochs):
            loss, pairs = _train_shards(syn0, syn1, tokens, offsets, bounds, cum_noise, keep,
                                        window, negatives, lr, min_lr, total_words, shard_done,
                                        seeds, max(max_len, 1))
            history.append(loss / max(pairs, 1))

    if not np.all(np.isfinite(syn0)):
        raise DataError("embedding training produced non-finite vectors")
    params = {
        "dim": dim, "window": window, "epochs": epochs, "negatives": negatives,
        "min_count": min_count, "lr": lr, "min_lr": min_lr, "subsample": subsample,
        "noise_power": 0.75, "threads": threads, "corpus": corpus.name,
    }
    return EmbeddingMatrix(words, syn0, min_count, seed, params, history)


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DataError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.sqrt(np.dot(u, u)))
    nv = float(np.sqrt(np.dot(v, v)))
    if nu == 0.0 or nv == 0.0:
        raise DataError("cosine similarity undefined for a zero-norm vector")
    c = float(np.dot(u, v)) / (nu * nv)
    return min(1.0, max(-1.0, c))


def top_context_words(feature: str, emb: EmbeddingMatrix, m: int = 50) -> ContextSet:
    """The ``m`` nearest vocabulary words to ``feature`` by cosine, feature excluded."""
    if m < 1:
        raise DataError(f"m must be >= 1, got {m}")
    if feature not in emb.vocab:
        raise DataError(f"feature word {feature!r} is not in the embedding vocabulary")
    unit = emb.unit_vectors
    i = emb.vocab[feature]
    sims = np.clip(unit @ unit[i], -1.0, 1.0)
    order = np.lexsort((emb.word_array, -sims))
    order = order[order != i][:m]
    return ContextSet(feature, [(emb.words[j], float(sims[j])) for j in order])
