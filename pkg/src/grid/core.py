"""
Voxel grids: labels, class probabilities, masks and box scores.

All grids share the canonical linear layout: voxel (x, y, z) lives at
(x * ny + y) * nz + z. ProbGrid stores probabilities voxel-major then class.
Grids take ownership of the arrays they are given and mark them read-only.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import GridValidationError, ShapeError, SpecMismatchError
from ..models import GridSpec

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-6
# rows already this close to 1 are left alone, so renormalizing is idempotent
RENORMALIZE_TOL = 1e-12


def _freeze(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


def _first_true(flags: np.ndarray) -> int:
    return int(np.flatnonzero(flags)[0])


def check_same_spec(*grids) -> GridSpec:
    """Return the shared spec of `grids`, raising SpecMismatchError otherwise."""
    spec = grids[0].spec
    for i, grid in enumerate(grids[1:], start=1):
        if grid.spec != spec:
            raise SpecMismatchError(f"grid {i} has {grid.spec}, expected {spec}")
    return spec


@dataclass(frozen=True)
class LabelGrid:
    """One class id per voxel."""

    spec: GridSpec
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.shape != (self.spec.num_voxels,):
            raise ShapeError(f"labels shape {labels.shape} != ({self.spec.num_voxels},)")
        if not np.issubdtype(labels.dtype, np.integer):
            raise GridValidationError(f"labels must be integers, got {labels.dtype}")
        if labels.dtype != np.uint8:
            if labels.size and (labels.min() < 0 or labels.max() >= self.spec.num_classes):
                bad = (labels < 0) | (labels >= self.spec.num_classes)
                raise GridValidationError("label out of range", _first_true(bad))
            labels = labels.astype(np.uint8)
        elif labels.size and labels.max() >= self.spec.num_classes:
            raise GridValidationError("label out of range", _first_true(labels >= self.spec.num_classes))
        object.__setattr__(self, "labels", _freeze(labels))

    @classmethod
    def filled(cls, spec: GridSpec, label: int) -> "LabelGrid":
        return cls(spec, np.full(spec.num_voxels, label, dtype=np.uint8))

    @classmethod
    def free(cls, spec: GridSpec) -> "LabelGrid":
        return cls.filled(spec, spec.free_label)

    def volume(self) -> np.ndarray:
        """(nx, ny, nz) view."""
        return self.labels.reshape(self.spec.dims)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelGrid):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.labels, other.labels)


@dataclass(frozen=True)
class ProbGrid:
    """A class distribution per voxel, shape (num_voxels, num_classes), float64."""

    spec: GridSpec
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        expected = (self.spec.num_voxels, self.spec.num_classes)
        if probs.shape != expected:
            if probs.size == expected[0] * expected[1] and probs.ndim == 1:
                probs = probs.reshape(expected)
            else:
                raise ShapeError(f"probs shape {probs.shape} != {expected}")
        probs = np.ascontiguousarray(probs)
        _validate_distributions(probs)
        object.__setattr__(self, "probs", _freeze(probs))

    @classmethod
    def normalized(cls, spec: GridSpec, probs: np.ndarray) -> "ProbGrid":
        """Validate within the tolerance, then renormalize voxels whose sum is off."""
        probs = np.array(probs, dtype=np.float64).reshape(spec.num_voxels, spec.num_classes)
        _validate_distributions(probs)
        sums = probs.sum(axis=1)
        off = np.abs(sums - 1.0) > RENORMALIZE_TOL
        probs[off] /= sums[off, None]
        return cls(spec, probs)

    @classmethod
    def one_hot(cls, labels: LabelGrid) -> "ProbGrid":
        spec = labels.spec
        probs = np.zeros((spec.num_voxels, spec.num_classes), dtype=np.float64)
        probs[np.arange(spec.num_voxels), labels.labels] = 1.0
        return cls(spec, probs)

    @classmethod
    def uniform(cls, spec: GridSpec) -> "ProbGrid":
        return cls(spec, np.full((spec.num_voxels, spec.num_classes), 1.0 / spec.num_classes))

    def volume(self) -> np.ndarray:
        """(nx, ny, nz, num_classes) view."""
        return self.probs.reshape(*self.spec.dims, self.spec.num_classes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProbGrid):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.probs, other.probs)


def _validate_distributions(probs: np.ndarray):
    finite = np.isfinite(probs).all(axis=1)
    if not finite.all():
        raise GridValidationError("non-finite probability", _first_true(~finite))
    negative = (probs < 0).any(axis=1)
    if negative.any():
        raise GridValidationError("negative probability", _first_true(negative))
    off = np.abs(probs.sum(axis=1) - 1.0) > NORMALIZATION_TOL
    if off.any():
        raise GridValidationError(
            f"probabilities do not sum to 1 within {NORMALIZATION_TOL}", _first_true(off)
        )


@dataclass(frozen=True)
class VoxelMask:
    """True where a voxel takes part in evaluation."""

    spec: GridSpec
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.shape != (self.spec.num_voxels,):
            raise ShapeError(f"mask shape {bits.shape} != ({self.spec.num_voxels},)")
        if bits.dtype != np.bool_:
            bad = (bits != 0) & (bits != 1)
            if bad.any():
                raise GridValidationError("mask value is not 0 or 1", _first_true(bad))
            bits = bits.astype(np.bool_)
        object.__setattr__(self, "bits", _freeze(bits))

    @classmethod
    def full(cls, spec: GridSpec) -> "VoxelMask":
        return cls(spec, np.ones(spec.num_voxels, dtype=np.bool_))

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoxelMask):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.bits, other.bits)


@dataclass(frozen=True)
class ScoreGrid:
    """Winning detection score per voxel, 0 where no box landed."""

    spec: GridSpec
    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.shape != (self.spec.num_voxels,):
            raise ShapeError(f"scores shape {scores.shape} != ({self.spec.num_voxels},)")
        bad = ~((scores >= 0.0) & (scores <= 1.0))
        if bad.any():
            raise GridValidationError("score outside [0, 1]", _first_true(bad))
        object.__setattr__(self, "scores", _freeze(scores))

    @classmethod
    def zeros(cls, spec: GridSpec) -> "ScoreGrid":
        return cls(spec, np.zeros(spec.num_voxels))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScoreGrid):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.scores, other.scores)


def voxel_index(spec: GridSpec, coords: Sequence[int]) -> int:
    """Linear index of voxel (x, y, z): (x * ny + y) * nz + z."""
    x, y, z = coords
    nx, ny, nz = spec.dims
    if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
        raise IndexError(f"voxel {tuple(coords)} outside dims {spec.dims}")
    return (x * ny + y) * nz + z


def voxel_coords(spec: GridSpec, index: int) -> Tuple[int, int, int]:
    """Inverse of voxel_index."""
    if not 0 <= index < spec.num_voxels:
        raise IndexError(f"linear index {index} outside [0, {spec.num_voxels})")
    _, ny, nz = spec.dims
    xy, z = divmod(index, nz)
    x, y = divmod(xy, ny)
    return x, y, z


def world_to_voxel(spec: GridSpec, point: Sequence[float]) -> Optional[Tuple[int, int, int]]:
    """Voxel containing a world point, or None when it falls outside the volume.

    Non-finite coordinates are outside every volume.
    """
    coords = []
    for p, o, d in zip(point, spec.origin, spec.dims):
        q = (p - o) / spec.voxel_size
        if not math.isfinite(q):
            return None
        i = math.floor(q)
        if not 0 <= i < d:
            return None
        coords.append(i)
    return tuple(coords)


def voxel_center(spec: GridSpec, coords: Sequence[int]) -> Tuple[float, float, float]:
    return tuple(o + (i + 0.5) * spec.voxel_size for o, i in zip(spec.origin, coords))


def points_to_indices(spec: GridSpec, points: np.ndarray) -> np.ndarray:
    """Linear voxel index per point (M, 3); -1 for points outside the volume.

    Uses the same arithmetic as world_to_voxel, element by element.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cells = np.floor((points - np.asarray(spec.origin)) / spec.voxel_size)
    dims = np.asarray(spec.dims)
    inside = ((cells >= 0) & (cells < dims)).all(axis=1)
    cells = cells.astype(np.int64)
    _, ny, nz = spec.dims
    index = (cells[:, 0] * ny + cells[:, 1]) * nz + cells[:, 2]
    return np.where(inside, index, -1)


def argmax_labels(p: ProbGrid) -> LabelGrid:
    """Most probable class per voxel; ties go to the lowest class index."""
    return LabelGrid(p.spec, p.probs.argmax(axis=1).astype(np.uint8))
