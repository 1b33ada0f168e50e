"""One-vs-rest class metrics, per-subtype TPR/FPR and the subtype confusion matrix."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Mapping

from .model import Label, TaxonomyCode, class_of

BUCKETS = ("R", "P1", "P3", "H1", "H2", "H3", "H4", "H5", "H6")
CLASSES = (Label.REAL, Label.POTENTIAL, Label.HALLUCINATED)


class ScoreError(ValueError):
    def __init__(self, missing: list[str], extra: list[str]):
        self.missing = missing
        self.extra = extra
        parts = []
        if missing:
            parts.append(f"{len(missing)} labeled keys missing from the report: {', '.join(missing[:20])}")
        if extra:
            parts.append(f"{len(extra)} report keys without a label: {', '.join(extra[:20])}")
        super().__init__("; ".join(parts))


def pct(value: float) -> float:
    """Percent to one decimal, rounding halves up."""
    return float(Decimal(repr(value * 100)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def bucket_of(code: TaxonomyCode | str) -> str:
    code = TaxonomyCode(str(code))
    return "R" if code.label is Label.REAL else code.value


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def support(self) -> int:
        return self.tp + self.fn

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        # always recomputed from precision and recall
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision": pct(self.precision), "recall": pct(self.recall), "f1": pct(self.f1),
        }


@dataclass(frozen=True)
class BucketRates:
    hits: int
    support: int
    false_alarms: int
    negatives: int

    @property
    def tpr(self) -> float:
        return self.hits / self.support if self.support else 0.0

    @property
    def fpr(self) -> float:
        # out-of-bucket items predicted into the bucket / all out-of-bucket items
        return self.false_alarms / self.negatives if self.negatives else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "hits": self.hits, "support": self.support, "false_alarms": self.false_alarms,
            "negatives": self.negatives, "tpr": pct(self.tpr), "fpr": pct(self.fpr),
        }


@dataclass
class EvalResult:
    classes: dict[str, Counts]
    buckets: dict[str, BucketRates]
    confusion: list[list[int]]
    n: int
    accuracy: float
    unbucketed: dict[str, int] = field(default_factory=dict)
    extra_keys: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "accuracy": pct(self.accuracy),
            "classes": {k: v.to_dict() for k, v in self.classes.items()},
            "subtypes": {k: v.to_dict() for k, v in self.buckets.items()},
            "confusion": {"labels": list(BUCKETS), "rows_true_cols_pred": self.confusion},
            "unbucketed_predictions": self.unbucketed,
            "extra_keys": self.extra_keys,
        }


def class_counts(pairs: list[tuple[str, str]], label: Label) -> Counts:
    tp = fp = fn = tn = 0
    for truth, pred in pairs:
        t, p = class_of(truth) is label, class_of(pred) is label
        if t and p:
            tp += 1
        elif p:
            fp += 1
        elif t:
            fn += 1
        else:
            tn += 1
    return Counts(tp, fp, fn, tn)


def score(predictions: Mapping[str, str], labels: Mapping[str, str], strict: bool = False) -> EvalResult:
    """Score predicted codes against ground-truth codes, keyed by citation key.

    Every labeled key must be predicted; with ``strict`` unlabeled predictions
    are an error too.
    """
    missing = sorted(set(labels) - set(predictions))
    extra = sorted(set(predictions) - set(labels))
    if missing or (strict and extra):
        raise ScoreError(missing, extra if strict else [])
    pairs = [(str(labels[k]), str(predictions[k])) for k in sorted(labels)]
    classes = {c.value: class_counts(pairs, c) for c in CLASSES}
    index = {b: i for i, b in enumerate(BUCKETS)}
    confusion = [[0] * len(BUCKETS) for _ in BUCKETS]
    unbucketed: dict[str, int] = {}
    for truth, pred in pairs:
        tb, pb = bucket_of(truth), bucket_of(pred)
        if tb not in index:
            continue
        if pb in index:
            confusion[index[tb]][index[pb]] += 1
        else:
            unbucketed[pb] = unbucketed.get(pb, 0) + 1
    buckets = {}
    for b in BUCKETS:
        hits = sum(1 for t, p in pairs if bucket_of(t) == b and bucket_of(p) == b)
        support = sum(1 for t, _ in pairs if bucket_of(t) == b)
        alarms = sum(1 for t, p in pairs if bucket_of(t) != b and bucket_of(p) == b)
        buckets[b] = BucketRates(hits, support, alarms, len(pairs) - support)
    correct = sum(1 for t, p in pairs if class_of(t) is class_of(p))
    return EvalResult(classes, buckets, confusion, len(pairs), correct / len(pairs) if pairs else 0.0, unbucketed, extra)
