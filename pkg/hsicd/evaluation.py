"""
ROC/AUC, boxplot separability statistics and binarization of change maps
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from scipy.stats import mannwhitneyu
from skimage.filters import threshold_otsu
from sklearn import metrics

from .detectors import normalize_scores
from .models import (
    CHANGED,
    IGNORE,
    UNCHANGED,
    BinarizePolicy,
    BinaryMask,
    ChangeMap,
    DataError,
)
from .schemas import ClassBox, SeparabilityStats

logger = logging.getLogger(__name__)

BOX_PERCENTILES = (0, 20, 50, 80, 100)


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # strictly decreasing; the first one (+inf) predicts nothing

    @property
    def points(self) -> List[Tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _labelled_scores(scores: ChangeMap, truth: BinaryMask) -> Tuple[np.ndarray, np.ndarray]:
    """Scores and boolean changed-labels of every non-ignored pixel."""
    if scores.shape != truth.shape:
        raise DataError(f"score map {scores.shape} and mask {truth.shape} differ in size")
    valid = truth.labels != IGNORE
    labels = truth.labels[valid] == CHANGED
    if not labels.any():
        raise DataError("the changed class is empty")
    if labels.all():
        raise DataError("the unchanged class is empty")
    return scores.score[valid], labels


def roc_curve(scores: ChangeMap, truth: BinaryMask) -> RocCurve:
    """Exact ROC: one point per distinct score, predicted changed when score >= threshold."""
    values, labels = _labelled_scores(scores, truth)
    fpr, tpr, thresholds = metrics.roc_curve(labels, values, drop_intermediate=False)
    thresholds = thresholds.astype(np.float64)
    thresholds[0] = np.inf
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve."""
    return float(metrics.auc(curve.fpr, curve.tpr))


def mann_whitney_auc(scores: ChangeMap, truth: BinaryMask) -> float:
    """P(changed score > unchanged score) + 0.5 * P(tie)."""
    values, labels = _labelled_scores(scores, truth)
    changed, unchanged = values[labels], values[~labels]
    statistic = mannwhitneyu(changed, unchanged, alternative="two-sided").statistic
    return float(statistic) / (changed.size * unchanged.size)


def confusion_at(scores: ChangeMap, truth: BinaryMask, threshold: float) -> Tuple[int, int, int, int]:
    """(tp, fp, tn, fn) when pixels scoring >= threshold are called changed."""
    values, labels = _labelled_scores(scores, truth)
    predicted = values >= threshold
    tp = int(np.sum(predicted & labels))
    fp = int(np.sum(predicted & ~labels))
    tn = int(np.sum(~predicted & ~labels))
    fn = int(np.sum(~predicted & labels))
    return tp, fp, tn, fn


def _box(values: np.ndarray) -> ClassBox:
    p0, p20, p50, p80, p100 = np.percentile(values, BOX_PERCENTILES, method="linear")
    return ClassBox(p0=p0, p20=p20, p50=p50, p80=p80, p100=p100)


def separability(scores: ChangeMap, truth: BinaryMask) -> SeparabilityStats:
    values, labels = _labelled_scores(scores, truth)
    return SeparabilityStats(changed=_box(values[labels]), unchanged=_box(values[~labels]))


def binarize(
    scores: ChangeMap,
    policy: Union[BinarizePolicy, str] = BinarizePolicy.PERCENTILE,
    q: float = 95.0,
) -> BinaryMask:
    """
    Threshold a change map. `percentile` marks pixels scoring >= the q-th percentile;
    `otsu` splits the min-max normalized scores with a 256-bin Otsu threshold.
    """
    policy = BinarizePolicy(policy)
    if policy is BinarizePolicy.PERCENTILE:
        if not 0 <= q <= 100:
            raise DataError(f"percentile q must lie in [0, 100], got {q}")
        threshold = np.percentile(scores.score, q, method="linear")
        changed = scores.score >= threshold
    else:
        normalized = normalize_scores(scores)
        if normalized.max() == normalized.min():
            logger.info("[EVAL] constant map, otsu marks nothing as changed")
            changed = np.zeros(scores.shape, dtype=bool)
        else:
            changed = normalized > threshold_otsu(normalized, nbins=256)
    return BinaryMask(np.where(changed, CHANGED, UNCHANGED).astype(np.uint8))


def write_roc_csv(curve: RocCurve, path: Union[str, Path]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["threshold", "fpr", "tpr"])
            for threshold, fpr, tpr in zip(curve.thresholds.tolist(), curve.fpr.tolist(), curve.tpr.tolist()):
                writer.writerow([repr(threshold), repr(fpr), repr(tpr)])
    except OSError as e:
        raise DataError(f"cannot write ROC table {path}: {e}") from e
