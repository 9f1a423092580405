"""Confusion-matrix metrics and ROC AUC with Left as the positive class."""

from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from data_model import LABELS, LEFT, STAYED
from errors import MetricError

METRIC_NAMES = (
    "kappa",
    "accuracy",
    "precision",
    "recall",
    "sensitivity",
    "specificity",
    "f1",
    "roc_auc",
)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MetricSet:
    """Undefined ratios are ``None``, never 0."""

    accuracy: float | None
    kappa: float | None
    precision: float | None
    recall: float | None
    sensitivity: float | None
    specificity: float | None
    f1: float | None
    roc_auc: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EvaluationReport:
    confusion: ConfusionMatrix
    metrics: MetricSet

    def to_dict(self) -> dict:
        return {"confusion": self.confusion.to_dict(), "metrics": self.metrics.to_dict()}


def _as_labels(values: Sequence[str] | np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=object)
    unknown = set(arr.tolist()) - set(LABELS)
    if unknown:
        raise MetricError(f"unknown label(s) in {name}: {sorted(map(str, unknown))}")
    return arr


def confusion(labels_true: Sequence[str], labels_pred: Sequence[str]) -> ConfusionMatrix:
    true = _as_labels(labels_true, "labels_true")
    pred = _as_labels(labels_pred, "labels_pred")
    if len(true) != len(pred):
        raise MetricError(f"length mismatch: {len(true)} true vs {len(pred)} predicted")
    pos_true = true == LEFT
    pos_pred = pred == LEFT
    return ConfusionMatrix(
        tp=int(np.sum(pos_true & pos_pred)),
        fp=int(np.sum(~pos_true & pos_pred)),
        tn=int(np.sum(~pos_true & ~pos_pred)),
        fn=int(np.sum(pos_true & ~pos_pred)),
    )


def _ratio(num: float, den: float) -> float | None:
    return None if den == 0 else num / den


def metric_set(cm: ConfusionMatrix, roc_auc: float | None = None) -> MetricSet:
    n = cm.total
    if n == 0:
        raise MetricError("empty confusion matrix")
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    specificity = _ratio(cm.tn, cm.tn + cm.fp)
    f1 = None
    if precision is not None and recall is not None:
        f1 = _ratio(2 * precision * recall, precision + recall)

    p_o = (cm.tp + cm.tn) / n
    p_e = ((cm.tp + cm.fn) * (cm.tp + cm.fp) + (cm.tn + cm.fp) * (cm.tn + cm.fn)) / n**2
    kappa = _ratio(p_o - p_e, 1.0 - p_e)

    return MetricSet(
        accuracy=p_o,
        kappa=kappa,
        precision=precision,
        recall=recall,
        sensitivity=recall,
        specificity=specificity,
        f1=f1,
        roc_auc=roc_auc,
    )


def _positive_mask(labels_true: Sequence[str]) -> np.ndarray:
    positive = _as_labels(labels_true, "labels_true") == LEFT
    if positive.all() or not positive.any():
        raise MetricError("ROC AUC needs both Left and Stayed rows")
    return positive


def roc_auc(scores: Sequence[float], labels_true: Sequence[str]) -> float:
    """Mann-Whitney AUC: P(random Left outscores random Stayed), ties count 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = _positive_mask(labels_true)
    if len(scores) != len(positive):
        raise MetricError(f"length mismatch: {len(scores)} scores vs {len(positive)} labels")
    ranks = stats.rankdata(scores, method="average")
    n_pos = int(positive.sum())
    n_neg = len(scores) - n_pos
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(
    scores: Sequence[float], labels_true: Sequence[str]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds) with one point per distinct score, from (0,0) to (1,1)."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = _positive_mask(labels_true)
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    hits = positive[order].astype(np.float64)
    last_of_run = np.r_[np.flatnonzero(np.diff(sorted_scores)), len(scores) - 1]
    tps = np.cumsum(hits)[last_of_run]
    fps = (last_of_run + 1) - tps
    tpr = np.r_[0.0, tps / positive.sum()]
    fpr = np.r_[0.0, fps / (~positive).sum()]
    thresholds = np.r_[np.inf, sorted_scores[last_of_run]]
    return fpr, tpr, thresholds


def trapezoid_auc(fpr: np.ndarray, tpr: np.ndarray) -> float:
    return float(np.trapezoid(tpr, fpr))


def evaluate(
    labels_true: Sequence[str],
    labels_pred: Sequence[str],
    scores: Sequence[float] | None = None,
) -> EvaluationReport:
    """Confusion matrix plus the full metric set; AUC only when scores are given."""
    cm = confusion(labels_true, labels_pred)
    auc = None
    if scores is not None:
        positive = np.asarray(labels_true, dtype=object) == LEFT
        if positive.any() and not positive.all():
            auc = roc_auc(scores, labels_true)
    return EvaluationReport(cm, metric_set(cm, roc_auc=auc))


def labels_from_scores(scores: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Left iff score >= threshold."""
    return np.where(np.asarray(scores) >= threshold, LEFT, STAYED).astype(object)
