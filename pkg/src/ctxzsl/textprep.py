"""Corpus loading and token normalisation.

Raw note text becomes a list of lowercase, letters-only tokens:

>>> preprocess("Suicide RISK: high!!")
['suicide', 'risk', 'high']
>>> preprocess("suicidalhomicidal", {"suicidal", "homicidal"})
['suicidal', 'homicidal']
"""

from __future__ import annotations

import json
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import DataError

_ALNUM_RUN = re.compile(r"[a-z0-9]+")
DEFAULT_MIN_LEXICON_LENGTH = 4


@dataclass
class Document:
    id: str
    text: str
    tokens: list[str] = field(default_factory=list)
    weak_label: Optional[int] = None
    meta: dict = field(default_factory=dict)


@dataclass
class Corpus:
    name: str
    documents: list[Document]
    label: Optional[int] = None

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    @property
    def ids(self) -> list[str]:
        return [d.id for d in self.documents]

    def token_lists(self) -> list[list[str]]:
        return [d.tokens for d in self.documents]


def fold_ascii(text: str) -> str:
    """Fold to ASCII; characters with no ASCII decomposition become spaces."""
    out = []
    for ch in unicodedata.normalize("NFKD", text):
        if ord(ch) < 128:
            out.append(ch)
        elif unicodedata.combining(ch):
            continue
        else:
            out.append(" ")
    return "".join(out)


def split_concatenation(token: str, lexicon: set[str], max_word_len: Optional[int] = None) -> list[str]:
    """Greedy longest-prefix decomposition of ``token`` into lexicon words.

    Returns ``[token]`` when the token is itself a lexicon word or when the
    greedy walk cannot consume the whole token with at least two pieces.
    """
    if not lexicon or token in lexicon:
        return [token]
    if max_word_len is None:
        max_word_len = max(map(len, lexicon))
    pieces = []
    i = 0
    n = len(token)
    while i < n:
        for j in range(min(n, i + max_word_len), i, -1):
            if token[i:j] in lexicon:
                pieces.append(token[i:j])
                i = j
                break
        else:
            return [token]
    return pieces if len(pieces) >= 2 else [token]


def _raw_tokens(raw: str) -> list[str]:
    text = fold_ascii(raw).lower()
    return [t for t in _ALNUM_RUN.findall(text) if t.isalpha()]


def preprocess(raw: str, split_lexicon: Optional[Iterable[str]] = None) -> list[str]:
    """Lowercase, strip punctuation, split known concatenations, drop non-letter tokens."""
    tokens = _raw_tokens(raw)
    if not split_lexicon:
        return tokens
    lexicon = split_lexicon if isinstance(split_lexicon, (set, frozenset)) else set(split_lexicon)
    if not lexicon:
        return tokens
    max_len = max(map(len, lexicon))
    out: list[str] = []
    for tok in tokens:
        out.extend(split_concatenation(tok, lexicon, max_len))
    return out


def build_split_lexicon(token_lists: Iterable[list[str]], min_length: int = DEFAULT_MIN_LEXICON_LENGTH) -> set[str]:
    """Default lexicon: corpus words of length >= ``min_length``.

    A word is left out when it decomposes into other lexicon words that are
    each strictly more frequent than it, since that is what a run-together
    pair of common words looks like. Without this rule every concatenation
    present in the corpus would vouch for itself.
    """
    counts: Counter = Counter()
    for toks in token_lists:
        counts.update(t for t in toks if len(t) >= min_length)
    candidates = set(counts)
    if not candidates:
        return set()
    max_len = max(map(len, candidates))
    lexicon = set(candidates)
    for word in candidates:
        parts = split_concatenation(word, candidates - {word}, max_len)
        if len(parts) >= 2 and all(counts[p] > counts[word] for p in parts):
            lexicon.discard(word)
    return lexicon


def contains_base_string(doc: Document, base: str) -> bool:
    if not base:
        raise DataError("base string must be non-empty")
    return any(base in tok for tok in doc.tokens)


def load_corpus(path, expected_label: Optional[int] = None, name: Optional[str] = None) -> Corpus:
    """Read a JSON-lines corpus (``id``, ``text``, optional ``label`` and ``tokens``)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"corpus file not found: {path}")
    docs: list[Document] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed record ({exc.msg})") from None
            if not isinstance(rec, dict) or not isinstance(rec.get("id"), str) or not isinstance(rec.get("text"), str):
                raise DataError(f"{path}:{lineno}: record needs string fields 'id' and 'text'")
            doc_id = rec["id"]
            if doc_id in seen:
                raise DataError(f"{path}:{lineno}: duplicate document id {doc_id!r}")
            seen.add(doc_id)
            label = rec.get("label", expected_label)
            if label is not None and label not in (0, 1):
                raise DataError(f"{path}:{lineno}: label must be 0 or 1, got {label!r}")
            tokens = rec.get("tokens")
            if tokens is not None and not (isinstance(tokens, list) and all(isinstance(t, str) for t in tokens)):
                raise DataError(f"{path}:{lineno}: 'tokens' must be a list of strings")
            docs.append(Document(doc_id, rec["text"], list(tokens or []), label, dict(rec.get("meta", {}))))
    if not docs:
        raise DataError(f"corpus file is empty: {path}")
    return Corpus(name or path.stem.split(".")[0], docs, expected_label)


def save_corpus(corpus: Corpus, path, with_tokens: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for d in corpus.documents:
            rec = {"id": d.id, "text": d.text}
            if d.weak_label is not None:
                rec["label"] = d.weak_label
            if with_tokens:
                rec["tokens"] = d.tokens
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def preprocess_corpus(corpus: Corpus, split_lexicon: Optional[set[str]] = None) -> Corpus:
    """Fill ``tokens`` for every document. Builds the default lexicon when none is given."""
    raw = [_raw_tokens(d.text) for d in corpus.documents]
    lexicon = build_split_lexicon(raw) if split_lexicon is None else split_lexicon
    max_len = max(map(len, lexicon)) if lexicon else 0
    docs = []
    for d, toks in zip(corpus.documents, raw):
        if lexicon:
            toks = [p for t in toks for p in split_concatenation(t, lexicon, max_len)]
        docs.append(Document(d.id, d.text, toks, d.weak_label, dict(d.meta)))
    return Corpus(corpus.name, docs, corpus.label)


def load_lexicon(path) -> set[str]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"lexicon file not found: {path}")
    words = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        w = line.strip().lower()
        if w and w.isalpha():
            words.add(w)
    return words
