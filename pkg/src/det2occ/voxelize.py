"""
Detection boxes to occupancy.

Retained boxes are filled with a point lattice, the points are voxelized and
each voxel keeps the label of the highest-scoring box that reached it.
Ties go to the lowest class id, then to the earliest box.
"""

import logging
from typing import Sequence, Tuple

import numpy as np

from ..errors import SpecMismatchError
from ..grid import LabelGrid, ProbGrid, ScoreGrid, points_to_indices
from ..models import ConversionConfig, DetectionBox, GridSpec
from .boxes import box_to_points, filter_boxes, points_in_box

logger = logging.getLogger(__name__)


def box_voxels(box: DetectionBox, spec: GridSpec, spacing_t: float) -> np.ndarray:
    """Sorted unique linear indices of the voxels a box's lattice reaches."""
    points = box_to_points(box, spacing_t)
    points = points[points_in_box(points, box)]
    index = points_to_indices(spec, points)
    return np.unique(index[index >= 0])


def voxelize_boxes(
    boxes: Sequence[DetectionBox],
    spec: GridSpec,
    cfg: ConversionConfig,
) -> Tuple[LabelGrid, ScoreGrid]:
    """
    Rasterize detection boxes into a label grid and a winning-score grid.

    Boxes are filtered with `cfg` first. Unreached voxels are free with score 0.
    """
    kept = filter_boxes(boxes, cfg)
    labels = np.full(spec.num_voxels, spec.free_label, dtype=np.uint8)
    scores = np.zeros(spec.num_voxels, dtype=np.float64)
    claimed = np.zeros(spec.num_voxels, dtype=np.bool_)

    # Claiming in priority order makes the first writer the winner.
    order = sorted(range(len(kept)), key=lambda i: (-kept[i].score, kept[i].class_id, i))
    for i in order:
        box = kept[i]
        voxels = box_voxels(box, spec, cfg.spacing_t)
        voxels = voxels[~claimed[voxels]]
        claimed[voxels] = True
        labels[voxels] = box.class_id
        scores[voxels] = box.score
        logger.debug(f"Box {i} (class {box.class_id}, score {box.score}) claimed {voxels.size} voxels")

    logger.info(f"Voxelized {len(kept)} boxes into {int(claimed.sum())} voxels")
    return LabelGrid(spec, labels), ScoreGrid(spec, scores)


def det_to_probgrid(labels: LabelGrid, scores: ScoreGrid) -> ProbGrid:
    """
    Soft occupancy from box labels: p(class) = score, p(free) = 1 - score.

    Free voxels are one-hot on free.
    """
    if labels.spec != scores.spec:
        raise SpecMismatchError("labels and scores cover different grids")
    spec = labels.spec
    free = spec.free_label
    probs = np.zeros((spec.num_voxels, spec.num_classes), dtype=np.float64)
    rows = np.arange(spec.num_voxels)
    occupied = labels.labels != free

    probs[rows[~occupied], free] = 1.0
    s = scores.scores[occupied]
    probs[rows[occupied], labels.labels[occupied]] = s
    probs[rows[occupied], free] = 1.0 - s
    return ProbGrid(spec, probs)


def boxes_to_probgrid(
    boxes: Sequence[DetectionBox],
    spec: GridSpec,
    cfg: ConversionConfig,
) -> ProbGrid:
    """voxelize_boxes followed by det_to_probgrid."""
    return det_to_probgrid(*voxelize_boxes(boxes, spec, cfg))
