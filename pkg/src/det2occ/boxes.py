"""
Oriented detection boxes: score filtering, interior point lattices and
point containment.
"""

import logging
import math
from typing import List, Sequence

import numpy as np

from ..models import ConversionConfig, DetectionBox

logger = logging.getLogger(__name__)


def _check_class(box: DetectionBox, cfg: ConversionConfig):
    if box.class_id >= len(cfg.thresholds):
        raise ValueError(
            f"box class_id {box.class_id} is not a semantic class "
            f"(thresholds cover {len(cfg.thresholds)} classes)"
        )


def filter_boxes(boxes: Sequence[DetectionBox], cfg: ConversionConfig) -> List[DetectionBox]:
    """Keep boxes with score >= thresholds[class_id], in input order."""
    allowed = set(cfg.allowed_classes) if cfg.allowed_classes is not None else None
    kept = []
    for box in boxes:
        _check_class(box, cfg)
        if allowed is not None and box.class_id not in allowed:
            continue
        if box.score >= cfg.thresholds[box.class_id]:
            kept.append(box)
    logger.info(f"Kept {len(kept)} of {len(boxes)} boxes")
    return kept


def box_to_points(box: DetectionBox, spacing_t: float) -> np.ndarray:
    """
    Centered lattice inside a box, (M, 3) world coordinates.

    Each local axis d gets n_d = max(1, floor(size_d / t)) points at
    (k + 0.5) / n_d * size_d - size_d / 2; the lattice is rotated by yaw and
    moved to the box center. All points lie strictly inside the box.
    """
    if spacing_t <= 0:
        raise ValueError("spacing_t must be positive")
    axes = []
    for size in box.size:
        n = max(1, math.floor(size / spacing_t))
        k = np.arange(n, dtype=np.float64)
        axes.append((k + 0.5) / n * size - size / 2)
    lx, ly, lz = (a.ravel() for a in np.meshgrid(*axes, indexing="ij"))

    c, s = math.cos(box.yaw), math.sin(box.yaw)
    cx, cy, cz = box.center
    points = np.empty((lx.size, 3), dtype=np.float64)
    points[:, 0] = cx + (c * lx - s * ly)
    points[:, 1] = cy + (s * lx + c * ly)
    points[:, 2] = cz + lz
    return points


def points_in_box(points: np.ndarray, box: DetectionBox) -> np.ndarray:
    """Containment per point (closed box), after moving into the box frame."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dx = points[:, 0] - box.center[0]
    dy = points[:, 1] - box.center[1]
    dz = points[:, 2] - box.center[2]
    local_x = c * dx + s * dy
    local_y = -s * dx + c * dy
    length, width, height = box.size
    return (
        (np.abs(local_x) <= length / 2)
        & (np.abs(local_y) <= width / 2)
        & (np.abs(dz) <= height / 2)
    )


def point_in_box(point: Sequence[float], box: DetectionBox) -> bool:
    return bool(points_in_box(np.asarray(point, dtype=np.float64), box)[0])
