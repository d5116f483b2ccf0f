"""Voxel grid core: geometry, grids, masks and indexing."""

from .core import (
    LabelGrid,
    ProbGrid,
    ScoreGrid,
    VoxelMask,
    argmax_labels,
    check_same_spec,
    points_to_indices,
    voxel_center,
    voxel_coords,
    voxel_index,
    world_to_voxel,
)
from ..models import ClassTable, GridSpec

__all__ = [
    "GridSpec",
    "ClassTable",
    "LabelGrid",
    "ProbGrid",
    "ScoreGrid",
    "VoxelMask",
    "argmax_labels",
    "check_same_spec",
    "points_to_indices",
    "voxel_center",
    "voxel_coords",
    "voxel_index",
    "world_to_voxel",
]
