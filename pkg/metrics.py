# metrics.py

from dataclasses import dataclass, asdict
from typing import Dict, Iterable, Optional

import numpy as np

from errors import ShapeError


@dataclass(frozen=True)
class ConfusionCounts:
    """Pixel confusion counts pooled over everything evaluated so far."""
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def merge(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            tn=self.tn + other.tn,
        )

    __add__ = merge

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


@dataclass(frozen=True)
class MetricsReport:
    miou: float
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def _as_numpy(x) -> np.ndarray:
    if hasattr(x, "detach"):
        x = x.detach().cpu().numpy()
    return np.asarray(x)


def update(counts: ConfusionCounts, pred, gt, threshold: float = 0.5) -> ConfusionCounts:
    """Binarize pred at threshold (>=) and add its per-pixel confusion against gt."""
    p = _as_numpy(pred)
    g = _as_numpy(gt)
    if p.shape != g.shape:
        raise ShapeError(f"prediction {p.shape} and ground truth {g.shape} differ")
    p = p >= threshold
    g = g.astype(bool)
    return counts.merge(
        ConfusionCounts(
            tp=int(np.count_nonzero(p & g)),
            fp=int(np.count_nonzero(p & ~g)),
            fn=int(np.count_nonzero(~p & g)),
            tn=int(np.count_nonzero(~p & ~g)),
        )
    )


def _ratio(num: float, den: float) -> float:
    # 0/0 -> 0
    return num / den if den > 0 else 0.0


def iou(counts: ConfusionCounts) -> float:
    return _ratio(counts.tp, counts.tp + counts.fp + counts.fn)


def f1_score(precision: float, recall: float) -> float:
    return _ratio(2.0 * precision * recall, precision + recall)


def finalize(counts: ConfusionCounts, per_image: Optional[Iterable[ConfusionCounts]] = None) -> MetricsReport:
    """
    mIoU = TP / (TP + FP + FN) over pooled counts; P = TP / (TP + FP);
    R = TP / (TP + FN); F1 = 2PR / (P + R). With per_image given, mIoU is
    instead the mean of the per-image IoUs.
    """
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    miou = iou(counts)
    if per_image is not None:
        ious = [iou(c) for c in per_image]
        miou = float(np.mean(ious)) if ious else 0.0
    return MetricsReport(miou=miou, precision=precision, recall=recall, f1=f1_score(precision, recall))
