"""Detection boxes to voxel occupancy."""

from .boxes import box_to_points, filter_boxes, point_in_box, points_in_box
from .voxelize import box_voxels, boxes_to_probgrid, det_to_probgrid, voxelize_boxes

__all__ = [
    "box_to_points",
    "box_voxels",
    "boxes_to_probgrid",
    "det_to_probgrid",
    "filter_boxes",
    "point_in_box",
    "points_in_box",
    "voxelize_boxes",
]
