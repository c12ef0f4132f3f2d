"""Threshold metrics, ROC AUC and the high-probability triage query."""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .textprep import Corpus, contains_base_string

DEFAULT_TAUS = (0.15, 0.5, 0.85)
TRIAGE_TAU = 0.90
UNDEFINED = "NaN/div by 0"
COMBINED = "Combined"


@dataclass
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.threshold != self.threshold:
            raise DataError("cannot add confusion matrices taken at different thresholds")
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn,
                               self.fn + other.fn, self.threshold)


@dataclass
class MetricsRow:
    subset: str
    cm: ConfusionMatrix
    sensitivity: Optional[float]
    specificity: Optional[float]
    ppv: Optional[float]

    def as_record(self) -> dict:
        def fmt(v):
            return UNDEFINED if v is None else v

        return {
            "subset": self.subset, "tau": self.cm.threshold,
            "tp": self.cm.tp, "fp": self.cm.fp, "tn": self.cm.tn, "fn": self.cm.fn,
            "sensitivity": fmt(self.sensitivity), "specificity": fmt(self.specificity), "ppv": fmt(self.ppv),
        }


@dataclass
class MetricsReport:
    rows: list[MetricsRow]
    auc: dict[str, Optional[float]] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def row(self, subset: str, tau: float) -> MetricsRow:
        for r in self.rows:
            if r.subset == subset and r.cm.threshold == tau:
                return r
        raise KeyError((subset, tau))

    def to_dict(self) -> dict:
        return {"rows": [r.as_record() for r in self.rows], "auc": dict(self.auc), "extra": dict(self.extra)}


def _check_pair(probs, labels):
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels)
    if p.shape != y.shape or p.ndim != 1:
        raise DataError(f"probabilities and labels must be equal-length lists ({p.shape} vs {y.shape})")
    if not np.isin(y, (0, 1)).all():
        raise DataError("labels must be 0 or 1")
    return p, y.astype(int)


def confusion_at_threshold(probs, labels, tau: float) -> ConfusionMatrix:
    """Predicted positive iff prob >= tau."""
    p, y = _check_pair(probs, labels)
    if len(p) == 0:
        raise DataError("at least one (probability, label) pair is required")
    pred = p >= tau
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    return ConfusionMatrix(tp, fp, tn, fn, float(tau))


def _ratio(num: int, den: int) -> Optional[float]:
    return None if den == 0 else num / den


def classification_metrics(cm: ConfusionMatrix, subset: str = COMBINED) -> MetricsRow:
    """Sensitivity, specificity and PPV; ``None`` marks a zero denominator."""
    return MetricsRow(subset, cm, _ratio(cm.tp, cm.tp + cm.fn), _ratio(cm.tn, cm.tn + cm.fp), _ratio(cm.tp, cm.tp + cm.fp))


def roc_auc(probs, labels) -> float:
    """Mann-Whitney AUC with mid-ranks, so tied scores count one half."""
    p, y = _check_pair(probs, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC AUC needs at least one positive and one negative label")
    _, inverse, counts = np.unique(p, return_inverse=True, return_counts=True)
    # twice the mid-rank of each distinct value keeps the arithmetic in integers
    ends = np.cumsum(counts)
    twice_rank = (2 * ends - counts + 1)[inverse]
    twice_u = int(twice_rank[y == 1].sum()) - n_pos * (n_pos + 1)
    return twice_u / (2 * n_pos * n_neg)


def roc_curve(probs, labels) -> list[tuple[float, float, float]]:
    """(threshold, fpr, tpr) points, one per distinct score plus the origin."""
    p, y = _check_pair(probs, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    points = [(float("inf"), 0.0, 0.0)]
    for tau in sorted(set(p.tolist()), reverse=True):
        cm = confusion_at_threshold(p, y, tau)
        points.append((tau, cm.fp / n_neg if n_neg else 0.0, cm.tp / n_pos if n_pos else 0.0))
    return points


def threshold_sweep(probs, labels, taus: Sequence[float] = DEFAULT_TAUS, subsets: Optional[Sequence[str]] = None) -> MetricsReport:
    """One row per (subset, tau) plus a combined row per tau built from summed counts."""
    p, y = _check_pair(probs, labels)
    if len(p) == 0:
        raise DataError("nothing to evaluate")
    names = list(subsets) if subsets is not None else [COMBINED] * len(p)
    if len(names) != len(p):
        raise DataError("subset names must align with probabilities")
    order = list(dict.fromkeys(names))
    split_subsets = order != [COMBINED]
    rows: list[MetricsRow] = []
    auc: dict[str, Optional[float]] = {}
    arr_names = np.asarray(names)
    for tau in taus:
        combined = None
        for name in order if split_subsets else []:
            sel = arr_names == name
            cm = confusion_at_threshold(p[sel], y[sel], tau)
            rows.append(classification_metrics(cm, name))
            combined = cm if combined is None else combined + cm
        if combined is None:
            combined = confusion_at_threshold(p, y, tau)
        rows.append(classification_metrics(combined, COMBINED))
    if split_subsets:
        for name in order:
            sel = arr_names == name
            auc[name] = roc_auc(p[sel], y[sel]) if 0 < y[sel].sum() < sel.sum() else None
    auc[COMBINED] = roc_auc(p, y) if 0 < y.sum() < len(y) else None
    return MetricsReport(rows, auc, {"taus": [float(t) for t in taus], "n": int(len(p))})


def median_probability(probs) -> float:
    probs = list(probs)
    if not probs:
        raise DataError("median of an empty probability list is undefined")
    return float(statistics.median(probs))


def triage_query(corpus: Corpus, probs, base: str, tau: float = TRIAGE_TAU) -> list[str]:
    """Ids of documents containing ``base`` with probability >= ``tau``, most probable first."""
    probs = list(probs)
    if len(probs) != len(corpus.documents):
        raise DataError(f"{len(probs)} probabilities for {len(corpus.documents)} documents")
    hits = [(float(pr), d.id) for d, pr in zip(corpus.documents, probs)
            if pr >= tau and contains_base_string(d, base)]
    hits.sort(key=lambda h: (-h[0], h[1]))
    return [doc_id for _, doc_id in hits]


REPORT_COLUMNS = ("subset", "tau", "tp", "fp", "tn", "fn", "sensitivity", "specificity", "ppv")


def write_report_csv(report: MetricsReport, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in report.rows:
            w.writerow(r.as_record())
        for name, value in report.auc.items():
            fh.write(f"# auc {name},{UNDEFINED if value is None else repr(value)}\n")
    return path


def write_roc_csv(points, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for row in points:
            w.writerow([repr(float(v)) for v in row])
    return path
