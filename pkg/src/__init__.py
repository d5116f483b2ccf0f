"""
Semantic occupancy toolkit

Post-processing and verification tools for camera-based 3D occupancy
prediction: masked mIoU evaluation, probability ensembles joined by
detection-box occupancy, cutout for camera image sets, and a desk-scale
occupancy head whose gradients are checked against finite differences.
"""

__version__ = "1.0.0"

from .io import FORMAT_VERSION
from .models import GridSpec, RunConfig
from .pipeline import OccupancyPipeline

__all__ = ["FORMAT_VERSION", "GridSpec", "OccupancyPipeline", "RunConfig", "__version__"]
