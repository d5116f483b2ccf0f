"""
Challenge defaults for every configurable part of the toolkit.

Defines:
- Grid geometry of the occupancy challenge volume
- The 18-entry class table (17 semantic classes + free)
- det2occ thresholds and lattice spacing
- Cutout, loss and toy-head defaults
"""

from typing import Any


CHALLENGE_CONFIG = {
    # 200 x 200 x 16 voxels of 0.4 m covering [-40, 40] x [-40, 40] x [-1, 5.4]
    "grid": {
        "dims": (200, 200, 16),
        "voxel_size": 0.4,
        "origin": (-40.0, -40.0, -1.0),
        "num_classes": 18,
    },

    "classes": {
        "names": [
            "others",
            "barrier",
            "bicycle",
            "bus",
            "car",
            "construction_vehicle",
            "motorcycle",
            "pedestrian",
            "traffic_cone",
            "trailer",
            "truck",
            "driveable_surface",
            "other_flat",
            "sidewalk",
            "terrain",
            "manmade",
            "vegetation",
            "free",
        ],
        # Movable objects, where detectors beat occupancy models
        "dynamic": [
            "bicycle",
            "bus",
            "car",
            "construction_vehicle",
            "motorcycle",
            "pedestrian",
            "trailer",
            "truck",
        ],
    },

    "det2occ": {
        "threshold": 0.3,
        "spacing_t": 0.2,  # half a voxel
    },

    "ensemble": {
        "strategy": "weighted",
        "det_weight": 1.0,
    },

    "metrics": {
        "strict_zero": False,
    },

    "cutout": {
        "num_holes": 1,
        "size_fraction": 0.25,
        "fill": 0.0,
        "seed": 0,
    },

    "loss": {
        "lambda_ce": 1.0,
        "lambda_dice": 1.0,
        "dice_eps": 1e-5,
    },

    # Desk-scale head used by the gradient suite
    "head": {
        "bev_channels": 4,
        "hidden": 8,
        "z": 8,
        "ch_v": 1,
        "width": 2,
        "ch_out": 2,
        "num_classes": 4,
        "init_scale": 0.5,
    },

    "selfcheck": {
        "fd_step": 1e-6,
        "tolerance": 1e-4,
        "seeds": 3,
        "quick_seeds": 1,
        "quick_entries_per_tensor": 6,
    },
}


def get_default(section: str, key: str) -> Any:
    """Get a default value, raising KeyError for unknown entries."""
    return CHALLENGE_CONFIG[section][key]
