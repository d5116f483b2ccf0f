"""
Cutout on multi-camera image sets.

Hole centers come from a splitmix64 stream seeded per image, so the holes
of image i depend only on (seed, i) and the image size.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

from ..errors import ShapeError
from ..models import CutoutSpec

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class ImageSet:
    """n camera images of h x w pixels, ch channels, stored (n, h, w, ch)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 4 or min(data.shape) < 1:
            raise ShapeError(f"image set must be (n, h, w, ch) with dims >= 1, got {data.shape}")
        if data.dtype not in (np.uint8, np.float64):
            data = data.astype(np.float64)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def h(self) -> int:
        return self.data.shape[1]

    @property
    def w(self) -> int:
        return self.data.shape[2]

    @property
    def ch(self) -> int:
        return self.data.shape[3]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageSet):
            return NotImplemented
        return self.data.dtype == other.data.dtype and np.array_equal(self.data, other.data)


def splitmix64(state: int) -> Tuple[int, int]:
    """One step: returns (next_state, output)."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def image_stream(seed: int, image: int) -> Iterator[int]:
    state = (seed ^ ((image * GOLDEN_GAMMA) & MASK64)) & MASK64
    while True:
        state, out = splitmix64(state)
        yield out


def hole_centers(seed: int, image: int, num_holes: int, h: int, w: int) -> List[Tuple[int, int]]:
    """(cy, cx) per hole; hole k uses draws 2k and 2k + 1 of the image's stream."""
    stream = image_stream(seed, image)
    centers = []
    for _ in range(num_holes):
        cy = next(stream) % h
        cx = next(stream) % w
        centers.append((cy, cx))
    return centers


def hole_bounds(center: Tuple[int, int], hole_h: int, hole_w: int, h: int, w: int) -> Tuple[int, int, int, int]:
    """Clipped (y0, y1, x0, x1) of the half-open hole rectangle."""
    cy, cx = center
    y0 = cy - hole_h // 2
    x0 = cx - hole_w // 2
    return max(0, y0), min(h, y0 + hole_h), max(0, x0), min(w, x0 + hole_w)


def _fill_value(fill: float, dtype: np.dtype):
    if dtype == np.uint8:
        if fill != int(fill) or not 0 <= fill <= 255:
            raise ValueError(f"fill {fill} is not a valid 8-bit pixel value")
        return np.uint8(int(fill))
    return float(fill)


def cutout(imgs: ImageSet, spec: CutoutSpec) -> ImageSet:
    """
    Write `spec.fill` into num_holes rectangles of every image, all channels.

    Pixels outside every hole are copied unchanged. Hole dims left unset
    default to a quarter of the image dims.
    """
    spec = spec.resolve(imgs.h, imgs.w)
    out = imgs.data.copy()
    fill = _fill_value(spec.fill, out.dtype)
    for i in range(imgs.n):
        for center in hole_centers(spec.seed, i, spec.num_holes, imgs.h, imgs.w):
            y0, y1, x0, x1 = hole_bounds(center, spec.hole_h, spec.hole_w, imgs.h, imgs.w)
            out[i, y0:y1, x0:x1, :] = fill
    logger.info(
        f"Cutout: {imgs.n} images, {spec.num_holes} holes of {spec.hole_h}x{spec.hole_w}, seed {spec.seed}"
    )
    return ImageSet(out)
