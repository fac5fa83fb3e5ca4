import logging

import numpy as np
from sklearn.metrics import auc, confusion_matrix, roc_curve

from src.exceptions import MetricError
from src.schemas.evaluation.models import ClassMetrics, ConfusionCounts, RocCurve

logger = logging.getLogger(__name__)


def accuracy(counts: ConfusionCounts) -> float:
    """(TP + TN) / total; undefined on an empty confusion table."""
    if counts.total == 0:
        raise MetricError("Accuracy is undefined for zero rows")
    return (counts.tp + counts.tn) / counts.total


def f1(counts: ConfusionCounts) -> float:
    """2TP / (2TP + FP + FN), 0 when nothing is predicted or present."""
    denominator = 2 * counts.tp + counts.fp + counts.fn
    if denominator == 0:
        return 0.0
    return 2 * counts.tp / denominator


def one_vs_rest_counts(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> list[ConfusionCounts]:
    """Per-class one-vs-rest confusion counts over the label space [0, n_classes)."""
    matrix = confusion_matrix(y_true, y_pred, labels=list(range(n_classes)))
    total = int(matrix.sum())
    counts = []
    for k in range(n_classes):
        tp = int(matrix[k, k])
        fn = int(matrix[k].sum()) - tp
        fp = int(matrix[:, k].sum()) - tp
        counts.append(ConfusionCounts(tp=tp, tn=total - tp - fn - fp, fp=fp, fn=fn))
    return counts


def overall_accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if len(y_true) == 0:
        raise MetricError("Accuracy is undefined for zero rows")
    return float((y_true == y_pred).mean())


def macro_f1(per_class: list[ConfusionCounts]) -> float:
    """Unweighted mean of the one-vs-rest F1 over classes with test support."""
    supported = [c for c in per_class if c.tp + c.fn > 0]
    if not supported:
        raise MetricError("Macro F1 needs at least one class with test rows")
    return float(np.mean([f1(c) for c in supported]))


def class_metrics(y_true: np.ndarray, y_pred: np.ndarray, class_names: list[str]) -> dict[str, ClassMetrics]:
    """Per-class accuracy (share of the class's rows predicted as the class) and F1.

    Classes absent from `y_true` are left out.
    """
    result = {}
    for name, counts in zip(class_names, one_vs_rest_counts(y_true, y_pred, len(class_names)), strict=True):
        support = counts.tp + counts.fn
        if support == 0:
            continue
        result[name] = ClassMetrics(accuracy=counts.tp / support, f1=f1(counts), support=support)
    return result


def roc_auroc(scores: np.ndarray, labels: np.ndarray) -> tuple[RocCurve, float]:
    """ROC curve from a descending threshold sweep and its trapezoidal area.

    Ties contribute half a pair, so the area equals the Mann-Whitney statistic.

    :param scores: Higher means more likely positive
    :param labels: 1 for positives, 0 for negatives
    :returns: (curve, auroc)
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape:
        raise MetricError(f"Scores {scores.shape} and labels {labels.shape} differ in shape")
    if not np.isin(labels, (0, 1)).all():
        raise MetricError("ROC labels must be 0 or 1")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise MetricError("ROC needs at least one positive and one negative row")

    fpr, tpr, thresholds = roc_curve(labels, scores, drop_intermediate=False)
    curve = RocCurve(thresholds=thresholds.tolist(), fpr=fpr.tolist(), tpr=tpr.tolist())
    return curve, float(auc(fpr, tpr))


def tpr_at_fpr(curve: RocCurve, target_fpr: float = 0.05) -> float:
    """TPR where the curve crosses `target_fpr`, interpolating linearly between adjacent points.

    When several points share the target FPR, the highest TPR among them is returned.
    """
    if not 0.0 <= target_fpr <= 1.0:
        raise MetricError(f"Target FPR must lie in [0, 1], got {target_fpr}")
    fpr = np.asarray(curve.fpr)
    tpr = np.asarray(curve.tpr)
    hits = fpr == target_fpr
    if hits.any():
        return float(tpr[hits].max())
    right = int(np.searchsorted(fpr, target_fpr, side="right"))
    if right == 0:
        return float(tpr[0])
    if right == len(fpr):
        return float(tpr[-1])
    left = right - 1
    weight = (target_fpr - fpr[left]) / (fpr[right] - fpr[left])
    return float(tpr[left] + weight * (tpr[right] - tpr[left]))
