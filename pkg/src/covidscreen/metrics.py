"""Classification metrics: confusion counts, precision/recall/F, ROC and AUC.

AUC comes from a threshold sweep over the distinct scores with tied scores
grouped into a single step, integrated by the trapezoidal rule; this is
numerically identical to the rank-statistic formulation (ties get half
credit), which the tests verify against a brute-force pair count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptySubgroup, SingleClassInput
from .manifest import CLASS_ORDER, Label

POSITIVE_THRESHOLD = 0.5


@dataclass(frozen=True)
class ScoredExample:
    """One evaluated image: COVID-class score plus ground truth."""

    image_id: str
    true_label: Label
    score: float                    # positive-class probability in [0, 1]
    predicted_label: str
    positive: bool                  # ground truth, after any label mapping

    @property
    def predicted_positive(self) -> bool:
        return self.score >= POSITIVE_THRESHOLD


def f_measure(precision: float, recall: float) -> float:
    """Harmonic mean 2PR/(P+R), defined as 0 at P = R = 0."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def safe_ratio(num: float, denom: float) -> float:
    return num / denom if denom > 0 else 0.0


def roc_curve(positives: Sequence[bool], scores: Sequence[float]) -> tuple[list[tuple[float, float]], float]:
    """ROC points and trapezoidal AUC.

    Scores are swept from high to low; equal scores form one threshold step.
    The curve runs from (0, 0) to (1, 1) with both coordinates non-decreasing.
    Raises SingleClassInput unless both classes are present.
    """
    y = np.asarray(positives, dtype=bool)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape or y.ndim != 1:
        raise ValueError("positives and scores must be equal-length vectors")
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClassInput(
            f"need both classes, got {n_pos} positive / {n_neg} negative")

    order = np.argsort(-s, kind="stable")
    s = s[order]
    y = y[order]

    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < s.size:
        j = i
        while j < s.size and s[j] == s[i]:
            tp += bool(y[j])
            fp += not y[j]
            j += 1
        points.append((fp / n_neg, tp / n_pos))
        i = j

    auc = 0.0
    for (fpr0, tpr0), (fpr1, tpr1) in zip(points, points[1:]):
        auc += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0
    return points, auc


def roc_auc(scored: Iterable[ScoredExample]) -> tuple[list[tuple[float, float]], float]:
    scored = list(scored)
    return roc_curve([e.positive for e in scored], [e.score for e in scored])


@dataclass
class EvalReport:
    """Everything the evaluation protocol reports for one test run."""

    mode: str
    n: int
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f_measure: float
    accuracy: float
    auc: float
    roc_points: list[tuple[float, float]]
    scored: list[ScoredExample] = field(repr=False, default_factory=list)
    # Multi-class extras (CT mode): argmax confusion matrix and macro averages.
    confusion_matrix: Optional[list[list[int]]] = None
    per_class: Optional[dict[str, dict[str, float]]] = None
    macro: Optional[dict[str, float]] = None
    argmax_accuracy: Optional[float] = None
    subgroups: dict[str, float] = field(default_factory=dict)
    model_version: Optional[str] = None

    def metric_row(self) -> dict[str, float]:
        """Headline metrics in the published column order."""
        return {
            "Precision": self.precision,
            "Recall": self.recall,
            "F-measure": self.f_measure,
            "AUC": self.auc,
            "Accuracy": self.accuracy,
        }


def report_from_scored(scored: Sequence[ScoredExample], mode: str,
                       model_version: Optional[str] = None) -> EvalReport:
    """Binary headline metrics (COVID vs rest at threshold 0.5) plus, in CT
    mode, the 3x3 argmax confusion matrix and macro-averaged metrics."""
    scored = list(scored)
    tp = sum(1 for e in scored if e.positive and e.predicted_positive)
    fp = sum(1 for e in scored if not e.positive and e.predicted_positive)
    tn = sum(1 for e in scored if not e.positive and not e.predicted_positive)
    fn = sum(1 for e in scored if e.positive and not e.predicted_positive)

    precision = safe_ratio(tp, tp + fp)
    recall = safe_ratio(tp, tp + fn)
    accuracy = safe_ratio(tp + tn, len(scored))
    points, auc = roc_auc(scored)

    report = EvalReport(
        mode=mode, n=len(scored), tp=tp, fp=fp, tn=tn, fn=fn,
        precision=precision, recall=recall,
        f_measure=f_measure(precision, recall), accuracy=accuracy,
        auc=auc, roc_points=points, scored=scored, model_version=model_version,
    )
    if mode == "ct3":
        _attach_multiclass(report)
    return report


def _attach_multiclass(report: EvalReport) -> None:
    names = [label.value for label in CLASS_ORDER]
    index = {name: i for i, name in enumerate(names)}
    matrix = [[0] * len(names) for _ in names]
    hits = 0
    for example in report.scored:
        true_i = index[example.true_label.value]
        pred_i = index.get(example.predicted_label)
        if pred_i is None:
            continue
        matrix[true_i][pred_i] += 1
        hits += true_i == pred_i

    per_class: dict[str, dict[str, float]] = {}
    for i, name in enumerate(names):
        col = sum(matrix[r][i] for r in range(len(names)))
        row = sum(matrix[i])
        p = safe_ratio(matrix[i][i], col)
        r = safe_ratio(matrix[i][i], row)
        per_class[name] = {"precision": p, "recall": r, "f_measure": f_measure(p, r)}

    report.confusion_matrix = matrix
    report.per_class = per_class
    report.macro = {
        key: sum(stats[key] for stats in per_class.values()) / len(per_class)
        for key in ("precision", "recall", "f_measure")
    }
    report.argmax_accuracy = safe_ratio(hits, report.n)


def false_positive_analysis(report: EvalReport,
                            subgroup: Label = Label.OTHER_PNEUMONIA) -> float:
    """Fraction of a (non-COVID) subgroup predicted COVID-positive."""
    members = [e for e in report.scored if e.true_label is subgroup]
    if not members:
        raise EmptySubgroup(f"no {subgroup.value} examples in the test set")
    rate = sum(1 for e in members if e.predicted_positive) / len(members)
    report.subgroups[f"{subgroup.value}_fp_rate"] = rate
    return rate
