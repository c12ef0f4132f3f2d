"""Seeded synthetic corpora with a planted contextual signal.

Four corpora are produced, mirroring a weakly labelled training pair and two
held-out test sets:

``train_pos``
    every document carries the base token and a *theme*: one signal term
    planted ``Poisson(signal_density)`` times, each time flanked by two of
    its designated context terms with short background gaps in between.
``train_neg``
    background text only; the base token appears at ``confounder_rate``.
``test_pos`` / ``test_neg``
    each document is truly positive with the role's prevalence; true
    positives get the planted signal, the base token appears at
    ``confounder_rate`` regardless of truth.

All corpora also receive isolated "decoy" mentions of signal and context
terms at the same rate, so plain keyword presence carries little
information; only the co-occurrence pattern does.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .textprep import Corpus, Document, save_corpus

ROLES = ("train_pos", "train_neg", "test_pos", "test_neg")
_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"


@dataclass
class SynthConfig:
    seed: int = 0
    sizes: tuple[int, int, int, int] = (2000, 2000, 500, 500)
    doc_length: tuple[int, int] = (40, 80)
    shared_vocab_size: int = 3000
    zipf_exponent: float = 1.0
    signal_terms: int = 20
    context_terms_per_signal: int = 4
    signal_density: float = 3.0
    max_gap: int = 2
    decoy_rate: float = 1.0
    confounder_rate: float = 0.5
    test_prevalence: tuple[float, float] = (0.8, 0.05)
    base_token: str = "suicidal"

    def validate(self) -> None:
        if len(self.sizes) != 4 or min(self.sizes) < 1:
            raise ConfigError(f"sizes must be four counts >= 1, got {self.sizes}")
        lo, hi = self.doc_length
        if not 1 <= lo <= hi:
            raise ConfigError(f"doc_length must satisfy 1 <= min <= max, got {self.doc_length}")
        if self.shared_vocab_size < 2:
            raise ConfigError("shared_vocab_size must be >= 2")
        if self.signal_terms < 1:
            raise ConfigError("signal_terms must be >= 1")
        if self.context_terms_per_signal < 2:
            raise ConfigError("context_terms_per_signal must be >= 2")
        if self.signal_terms * (1 + self.context_terms_per_signal) > self.shared_vocab_size:
            raise ConfigError(
                f"{self.signal_terms} signal terms with {self.context_terms_per_signal} context terms each "
                f"exceed the shared vocabulary size {self.shared_vocab_size}")
        if self.signal_density < 0 or self.decoy_rate < 0:
            raise ConfigError("signal_density and decoy_rate must be >= 0")
        if self.max_gap < 1:
            raise ConfigError("max_gap must be >= 1")
        for name in ("confounder_rate",):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if any(not 0.0 <= p <= 1.0 for p in self.test_prevalence) or len(self.test_prevalence) != 2:
            raise ConfigError("test_prevalence must be two probabilities")
        if not (self.base_token.isalpha() and self.base_token.islower() and self.base_token.isascii()):
            raise ConfigError(f"base_token must be lowercase ASCII letters, got {self.base_token!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown synth config key(s): {', '.join(sorted(unknown))}")
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


@dataclass
class Lexicon:
    background: list[str]
    background_p: np.ndarray
    signals: list[str]
    contexts: dict[str, list[str]]

    def __post_init__(self):
        self._cdf = np.cumsum(self.background_p)
        self._cdf[-1] = 1.0

    def draw_background(self, rng: np.random.Generator, size: int) -> list[str]:
        idx = np.searchsorted(self._cdf, rng.random(size), side="right")
        return [self.background[i] for i in idx]

    @property
    def planted(self) -> list[str]:
        return self.signals + [c for s in self.signals for c in self.contexts[s]]


@dataclass
class SynthResult:
    config: SynthConfig
    corpora: dict[str, Corpus]
    truth: dict[str, int]
    lexicon: Lexicon
    audits: dict[str, dict] = field(default_factory=dict)


def _make_words(rng: np.random.Generator, count: int, forbidden: str) -> list[str]:
    # 2 or 3 consonant-vowel syllables: lengths 4 and 6 cannot concatenate into each other
    seen: set[str] = set()
    words: list[str] = []
    while len(words) < count:
        n_syl = 2 if rng.random() < 0.3 else 3
        w = "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(n_syl))
        if w in seen or forbidden in w or w in forbidden:
            continue
        seen.add(w)
        words.append(w)
    return words


def build_lexicon(config: SynthConfig) -> Lexicon:
    rng = np.random.default_rng([config.seed, 9999])
    n_sig = config.signal_terms
    n_ctx = config.context_terms_per_signal
    words = _make_words(rng, config.shared_vocab_size, config.base_token)
    signals = words[:n_sig]
    contexts = {s: words[n_sig + i * n_ctx: n_sig + (i + 1) * n_ctx] for i, s in enumerate(signals)}
    background = words[n_sig * (1 + n_ctx):]
    ranks = np.arange(1, len(background) + 1, dtype=np.float64)
    p = ranks ** -config.zipf_exponent
    return Lexicon(background, p / p.sum(), signals, contexts)


def _insert_blocks(rng, units: list[list[str]], blocks: list[list[str]]) -> None:
    for block in blocks:
        units.insert(int(rng.integers(len(units) + 1)), block)


def _make_document(rng, config: SynthConfig, lex: Lexicon, doc_id: str, truth: int,
                   with_base: bool) -> Document:
    lo, hi = config.doc_length
    length = int(rng.integers(lo, hi + 1))
    units: list[list[str]] = [[w] for w in lex.draw_background(rng, length)]
    blocks: list[list[str]] = []
    n_events = 0
    theme = None
    if truth:
        theme = lex.signals[int(rng.integers(len(lex.signals)))]
        n_events = int(rng.poisson(config.signal_density))
        for _ in range(n_events):
            left, right = rng.choice(lex.contexts[theme], size=2, replace=False)
            block = [str(left)]
            block += lex.draw_background(rng, int(rng.integers(1, config.max_gap + 1)))
            block.append(theme)
            block += lex.draw_background(rng, int(rng.integers(1, config.max_gap + 1)))
            block.append(str(right))
            blocks.append(block)
    planted = lex.planted
    for _ in range(int(rng.poisson(config.decoy_rate))):
        blocks.append([planted[int(rng.integers(len(planted)))]])
    if with_base:
        blocks.append([config.base_token])
    _insert_blocks(rng, units, blocks)
    tokens = [t for u in units for t in u]
    meta = {"signal_events": n_events, "theme": theme, "truth": truth, "base": with_base}
    return Document(doc_id, " ".join(tokens), tokens, None, meta)


def generate_labeled_corpora(config: Optional[SynthConfig] = None) -> SynthResult:
    config = config or SynthConfig()
    config.validate()
    lex = build_lexicon(config)
    corpora: dict[str, Corpus] = {}
    truth: dict[str, int] = {}
    for role_idx, (role, size) in enumerate(zip(ROLES, config.sizes)):
        docs = []
        for i in range(size):
            rng = np.random.default_rng([config.seed, role_idx, i])
            doc_id = f"{role.replace('_', '')}-{i:06d}"
            if role == "train_pos":
                is_true, base = 1, True
            elif role == "train_neg":
                is_true, base = 0, bool(rng.random() < config.confounder_rate)
            else:
                prevalence = config.test_prevalence[0 if role == "test_pos" else 1]
                is_true = int(rng.random() < prevalence)
                base = bool(rng.random() < config.confounder_rate)
            doc = _make_document(rng, config, lex, doc_id, is_true, base)
            if role.startswith("train"):
                doc.weak_label = 1 if role == "train_pos" else 0
            else:
                truth[doc_id] = is_true
            docs.append(doc)
        label = {"train_pos": 1, "train_neg": 0}.get(role)
        corpora[role] = Corpus(role, docs, label)
    result = SynthResult(config, corpora, truth, lex)
    result.audits = {role: audit_corpus(c, config, role, lex) for role, c in corpora.items()}
    return result


def _count_events(tokens: list[str], lex: Lexicon, reach: int) -> int:
    signals = {s: set(lex.contexts[s]) for s in lex.signals}
    n = 0
    for i, tok in enumerate(tokens):
        ctx = signals.get(tok)
        if ctx is None:
            continue
        window = tokens[max(0, i - reach): i] + tokens[i + 1: i + reach + 1]
        if any(t in ctx for t in window):
            n += 1
    return n


def audit_corpus(corpus: Corpus, config: SynthConfig, role: Optional[str] = None,
                 lexicon: Optional[Lexicon] = None) -> dict:
    """Realised signal and base-token rates checked against 3-sigma bands."""
    role = role or corpus.name
    if role not in ROLES:
        raise ConfigError(f"cannot infer corpus role from {role!r}; pass one of {ROLES}")
    lex = lexicon or build_lexicon(config)
    n = len(corpus.documents)
    if all("signal_events" in d.meta for d in corpus.documents):
        events = [int(d.meta["signal_events"]) for d in corpus.documents]
        source = "metadata"
    else:
        events = [_count_events(d.tokens, lex, config.max_gap + 1) for d in corpus.documents]
        source = "token-scan"
    base_hits = sum(config.base_token in d.tokens for d in corpus.documents)
    vocab = set(t for d in corpus.documents for t in d.tokens)

    lam = config.signal_density
    if role == "train_pos":
        prev, base_p = 1.0, 1.0
    elif role == "train_neg":
        prev, base_p = 0.0, config.confounder_rate
    else:
        prev = config.test_prevalence[0 if role == "test_pos" else 1]
        base_p = config.confounder_rate
    exp_events = lam * prev
    var_events = lam * prev + lam * lam * prev * (1 - prev)
    mean_events = sum(events) / n
    sd_events = math.sqrt(var_events / n)
    base_rate = base_hits / n
    sd_base = math.sqrt(base_p * (1 - base_p) / n)

    def within(observed, expected, sd):
        return abs(observed - expected) <= 3 * sd + 1e-12

    checks = {"base_rate": within(base_rate, base_p, sd_base)}
    if role != "train_neg":
        checks["signal_events"] = within(mean_events, exp_events, sd_events)
    return {
        "role": role,
        "documents": n,
        "event_source": source,
        "signal_events_total": int(sum(events)),
        "signal_events_per_doc": mean_events,
        "expected_events_per_doc": exp_events,
        "events_sd_of_mean": sd_events,
        "base_token_rate": base_rate,
        "expected_base_token_rate": base_p,
        "base_rate_sd": sd_base,
        "background_coverage": len(vocab & set(lex.background)) / len(lex.background),
        "checks": checks,
        "ok": all(checks.values()),
    }


def write_synth(result: SynthResult, out_dir) -> dict[str, Path]:
    """Write the four corpora, ground truth, audit and config; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    for role, corpus in result.corpora.items():
        paths[role] = save_corpus(corpus, out / f"{role}.jsonl", with_tokens=False)
    truth_path = out / "truth.jsonl"
    with truth_path.open("w", encoding="utf-8") as fh:
        for doc_id, label in result.truth.items():
            fh.write(json.dumps({"id": doc_id, "label": label}) + "\n")
    paths["truth"] = truth_path
    audit_path = out / "audit.json"
    audit_path.write_text(json.dumps(result.audits, indent=2, sort_keys=True) + "\n")
    paths["audit"] = audit_path
    cfg_path = out / "synth_config.json"
    cfg_path.write_text(json.dumps(result.config.to_dict(), indent=2, sort_keys=True) + "\n")
    paths["config"] = cfg_path
    return paths
