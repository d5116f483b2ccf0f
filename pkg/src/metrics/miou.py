"""
Masked per-class IoU and mIoU over semantic occupancy grids.

Counts come from a masked confusion histogram; the free class never gets an
IoU entry. Classes whose union is empty under the mask are undefined and
left out of the mean unless `strict_zero` is set, in which case they count
as 0 in the mean.
"""

import logging
from typing import List, Optional

import numpy as np

from ..grid import LabelGrid, ProbGrid, VoxelMask, argmax_labels, check_same_spec
from ..errors import SpecMismatchError
from ..models import ClassCounts, ClassTable, GridSpec, IoUReport

logger = logging.getLogger(__name__)


def confusion_histogram(pred: LabelGrid, gt: LabelGrid, mask: Optional[VoxelMask] = None) -> np.ndarray:
    """(num_classes, num_classes) int64 counts, rows = ground truth, cols = prediction."""
    grids = (pred, gt) if mask is None else (pred, gt, mask)
    spec = check_same_spec(*grids)
    k = spec.num_classes
    p = pred.labels
    g = gt.labels
    if mask is not None:
        p = p[mask.bits]
        g = g[mask.bits]
    index = g.astype(np.int64) * k + p.astype(np.int64)
    return np.bincount(index, minlength=k * k).astype(np.int64).reshape(k, k)


def report_from_histogram(
    hist: np.ndarray,
    class_table: ClassTable,
    strict_zero: bool = False,
) -> IoUReport:
    intersection = np.diag(hist)
    union = hist.sum(axis=0) + hist.sum(axis=1) - intersection

    per_class: List[Optional[float]] = []
    counts: List[ClassCounts] = []
    for c in range(class_table.num_classes - 1):
        i, u = int(intersection[c]), int(union[c])
        counts.append(ClassCounts(intersection=i, union=u))
        per_class.append(i / u if u > 0 else None)

    defined = [v for v in per_class if v is not None]
    if strict_zero:
        miou = sum(defined) / len(per_class)
    elif defined:
        miou = sum(defined) / len(defined)
    else:
        miou = None

    return IoUReport(
        class_names=list(class_table.semantic_names),
        per_class=per_class,
        counts=counts,
        miou=miou,
        strict_zero=strict_zero,
    )


def _table_for(spec: GridSpec, class_table: Optional[ClassTable]) -> ClassTable:
    if class_table is None:
        return ClassTable.for_spec(spec)
    if class_table.num_classes != spec.num_classes:
        raise ValueError(
            f"class table has {class_table.num_classes} classes, grid has {spec.num_classes}"
        )
    return class_table


def evaluate(
    pred: LabelGrid,
    gt: LabelGrid,
    mask: Optional[VoxelMask] = None,
    strict_zero: bool = False,
    class_table: Optional[ClassTable] = None,
) -> IoUReport:
    """
    Score predicted labels against ground truth.

    Args:
        pred: Predicted labels
        gt: Ground-truth labels
        mask: Camera mask; None evaluates every voxel
        strict_zero: Count classes with an empty union as 0 in the mean
        class_table: Names for the report (default: challenge names or generic)

    Returns:
        IoUReport over the num_classes - 1 semantic classes
    """
    hist = confusion_histogram(pred, gt, mask)
    report = report_from_histogram(hist, _table_for(pred.spec, class_table), strict_zero)
    logger.debug(f"Evaluated {int(hist.sum())} voxels, {report.num_defined} classes defined")
    return report


def evaluate_prob(
    pred: ProbGrid,
    gt: LabelGrid,
    mask: Optional[VoxelMask] = None,
    strict_zero: bool = False,
    class_table: Optional[ClassTable] = None,
) -> IoUReport:
    """evaluate() on the argmax labels of a probability grid."""
    check_same_spec(pred, gt)
    return evaluate(argmax_labels(pred), gt, mask, strict_zero, class_table)


class IoUAccumulator:
    """
    Sums intersection/union counts over many frames.

    The dataset-level mIoU is computed from the summed counts, not from the
    mean of per-frame IoUs.
    """

    def __init__(self, spec: GridSpec, class_table: Optional[ClassTable] = None, strict_zero: bool = False):
        self.spec = spec
        self.class_table = _table_for(spec, class_table)
        self.strict_zero = strict_zero
        self._hist = np.zeros((spec.num_classes, spec.num_classes), dtype=np.int64)
        self.frames = 0

    def update(self, pred: LabelGrid, gt: LabelGrid, mask: Optional[VoxelMask] = None):
        if pred.spec != self.spec:
            raise SpecMismatchError(f"frame has {pred.spec}, accumulator has {self.spec}")
        self._hist += confusion_histogram(pred, gt, mask)
        self.frames += 1

    def update_prob(self, pred: ProbGrid, gt: LabelGrid, mask: Optional[VoxelMask] = None):
        self.update(argmax_labels(pred), gt, mask)

    def merge(self, other: "IoUAccumulator"):
        if other.spec != self.spec:
            raise SpecMismatchError("accumulators cover different grids")
        self._hist += other._hist
        self.frames += other.frames

    def report(self) -> IoUReport:
        logger.info(f"Accumulated IoU over {self.frames} frames")
        return report_from_histogram(self._hist, self.class_table, self.strict_zero)


def format_report(report: IoUReport) -> str:
    """Per-class IoU table, one class per line."""
    width = max(len(n) for n in report.class_names)
    lines = [f"{'class':<{width}}  {'IoU':>7}  {'inter':>10}  {'union':>10}"]
    for name, iou, counts in zip(report.class_names, report.per_class, report.counts):
        value = f"{iou:7.4f}" if iou is not None else f"{'-':>7}"
        lines.append(f"{name:<{width}}  {value}  {counts.intersection:>10}  {counts.union:>10}")
    miou = f"{report.miou:.4f}" if report.miou is not None else "undefined"
    lines.append(f"{'mIoU':<{width}}  {miou:>7}")
    return "\n".join(lines)
