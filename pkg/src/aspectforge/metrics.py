"""Classification metrics: confusion matrix, per-class P/R/F1, aggregates,
micro-averaged precision-recall curve, and report serialization."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import N_CLASSES


class MetricsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are actual classes, columns predicted classes."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def supports(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


@dataclass(frozen=True)
class PerClassMetrics:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    undefined: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("precision", "recall", "f1"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        object.__setattr__(self, "support", np.asarray(self.support, dtype=np.int64))
        if self.undefined is None:
            object.__setattr__(self, "undefined", np.zeros(len(self.f1), dtype=bool))


@dataclass(frozen=True)
class Averages:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class Aggregates:
    accuracy: float | None
    macro: Averages
    weighted: Averages


@dataclass(frozen=True)
class PRCurve:
    thresholds: np.ndarray
    recall: np.ndarray
    precision: np.ndarray


@dataclass(frozen=True)
class MetricsReport:
    confusion: ConfusionMatrix
    per_class: PerClassMetrics
    accuracy: float
    macro: Averages
    weighted: Averages
    pr_curve: PRCurve | None = None
    pr_auc_micro: float | None = None


def confusion_matrix(actual, predicted, n_classes: int = N_CLASSES) -> ConfusionMatrix:
    actual = np.asarray(actual, dtype=np.int64).reshape(-1)
    predicted = np.asarray(predicted, dtype=np.int64).reshape(-1)
    if actual.shape != predicted.shape:
        raise MetricsError(f"{len(actual)} actual labels vs {len(predicted)} predictions")
    for name, arr in (("actual", actual), ("predicted", predicted)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise MetricsError(f"{name} labels must lie in [0, {n_classes - 1}]")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (actual, predicted), 1)
    return ConfusionMatrix(counts)


def per_class_prf(cm: ConfusionMatrix) -> PerClassMetrics:
    """Per-class scores; 0/0 divisions give 0 and set ``undefined``."""
    c = cm.counts.astype(np.float64)
    tp = np.diag(c)
    predicted = c.sum(axis=0)
    support = c.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    undefined = (predicted == 0) | (support == 0)
    return PerClassMetrics(precision, recall, f1, support.astype(np.int64), undefined)


def aggregate(per_class: PerClassMetrics, cm: ConfusionMatrix | None = None) -> Aggregates:
    """Macro (plain mean over all classes) and support-weighted averages.

    Accuracy needs the confusion matrix and is ``None`` without it.
    """
    support = per_class.support.astype(np.float64)
    if support.sum() <= 0:
        raise MetricsError("no evaluated examples")
    w = support / support.sum()

    def avg(weights):
        return Averages(
            float(np.sum(weights * per_class.precision)),
            float(np.sum(weights * per_class.recall)),
            float(np.sum(weights * per_class.f1)),
        )

    accuracy = None
    if cm is not None:
        if cm.total == 0:
            raise MetricsError("no evaluated examples")
        accuracy = float(np.trace(cm.counts) / cm.total)
    k = len(support)
    return Aggregates(accuracy, avg(np.full(k, 1.0 / k)), avg(w))


def pr_curve_micro(actual, scores) -> tuple[PRCurve, float]:
    """One-vs-rest micro-averaged precision-recall curve.

    Every (example, class) cell is a binary decision scored by its
    probability. Thresholds sweep the distinct scores from high to low; the
    area is the step sum ``sum((R_i - R_{i-1}) * P_i)`` starting from
    recall 0.
    """
    scores = np.asarray(scores, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.int64)
    if scores.ndim != 2 or len(actual) != len(scores):
        raise MetricsError("scores must be an (N, K) array matching the labels")
    if len(actual) and not np.allclose(scores.sum(axis=1), 1.0, atol=1e-6):
        raise MetricsError("score rows must sum to 1")
    truth = np.zeros_like(scores, dtype=bool)
    truth[np.arange(len(actual)), actual] = True

    s = scores.reshape(-1)
    t = truth.reshape(-1)
    positives = int(t.sum())
    if positives == 0:
        raise MetricsError("no positive instances")
    order = np.argsort(-s, kind="mergesort")
    s, t = s[order], t[order]
    tp = np.cumsum(t)
    fp = np.cumsum(~t)
    # last index of each run of equal scores
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    thresholds = s[last]
    recall = tp[last] / positives
    precision = tp[last] / (tp[last] + fp[last])
    auc = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return PRCurve(thresholds, recall, precision), auc


def build_report(actual, predicted, scores=None, n_classes: int = N_CLASSES) -> MetricsReport:
    cm = confusion_matrix(actual, predicted, n_classes)
    per = per_class_prf(cm)
    agg = aggregate(per, cm)
    curve, auc = (None, None)
    if scores is not None:
        curve, auc = pr_curve_micro(actual, scores)
    return MetricsReport(cm, per, agg.accuracy, agg.macro, agg.weighted, curve, auc)


# -- serialization -----------------------------------------------------------


def _averages(a: Averages) -> dict:
    return {"precision": a.precision, "recall": a.recall, "f1": a.f1}


def render_report(report: MetricsReport) -> str:
    """JSON document with every report field; floats round-trip exactly."""
    doc = {
        "accuracy": report.accuracy,
        "macro_avg": _averages(report.macro),
        "weighted_avg": _averages(report.weighted),
        "pr_auc_micro": report.pr_auc_micro,
        "per_class": [
            {
                "class": i,
                "precision": float(report.per_class.precision[i]),
                "recall": float(report.per_class.recall[i]),
                "f1": float(report.per_class.f1[i]),
                "support": int(report.per_class.support[i]),
                "undefined": bool(report.per_class.undefined[i]),
            }
            for i in range(len(report.per_class.f1))
        ],
        "confusion_matrix": {
            "rows": "actual",
            "columns": "predicted",
            "counts": [[int(v) for v in row] for row in report.confusion.counts],
        },
        "pr_curve": None
        if report.pr_curve is None
        else {
            "columns": ["threshold", "recall", "precision"],
            "points": [
                [float(a), float(b), float(c)]
                for a, b, c in zip(report.pr_curve.thresholds, report.pr_curve.recall, report.pr_curve.precision)
            ],
        },
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def parse_report(text: str) -> MetricsReport:
    doc = json.loads(text)
    pc = doc["per_class"]
    per = PerClassMetrics(
        [c["precision"] for c in pc],
        [c["recall"] for c in pc],
        [c["f1"] for c in pc],
        [c["support"] for c in pc],
        np.array([c["undefined"] for c in pc], dtype=bool),
    )
    curve = None
    if doc.get("pr_curve"):
        pts = np.asarray(doc["pr_curve"]["points"], dtype=np.float64).reshape(-1, 3)
        curve = PRCurve(pts[:, 0], pts[:, 1], pts[:, 2])
    return MetricsReport(
        ConfusionMatrix(np.asarray(doc["confusion_matrix"]["counts"], dtype=np.int64)),
        per,
        doc["accuracy"],
        Averages(**doc["macro_avg"]),
        Averages(**doc["weighted_avg"]),
        curve,
        doc["pr_auc_micro"],
    )


def confusion_csv(cm: ConfusionMatrix) -> str:
    return "".join(",".join(str(int(v)) for v in row) + "\n" for row in cm.counts)


def pr_curve_csv(curve: PRCurve) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["threshold", "recall", "precision"])
    for row in zip(curve.thresholds, curve.recall, curve.precision):
        w.writerow([repr(float(v)) for v in row])
    return out.getvalue()


def read_pr_curve_csv(text: str) -> PRCurve:
    rows = list(csv.DictReader(io.StringIO(text)))
    return PRCurve(
        np.array([float(r["threshold"]) for r in rows]),
        np.array([float(r["recall"]) for r in rows]),
        np.array([float(r["precision"]) for r in rows]),
    )
