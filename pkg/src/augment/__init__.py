"""Image augmentation."""

from .cutout import ImageSet, cutout, hole_bounds, hole_centers, image_stream, splitmix64

__all__ = ["ImageSet", "cutout", "hole_bounds", "hole_centers", "image_stream", "splitmix64"]
