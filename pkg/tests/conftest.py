"""
Pytest configuration and shared fixtures.
"""

import logging
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.grid import ProbGrid
from src.models import GridSpec


@pytest.fixture(autouse=True)
def reset_logging():
    """Drop the handlers setup_logging installs so later tests start clean."""
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        if type(handler) in (logging.StreamHandler, logging.FileHandler):
            root.removeHandler(handler)
            handler.close()
    root.setLevel(logging.WARNING)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_spec():
    """4x4x2 voxels over 5 classes (4 semantic + free)."""
    return GridSpec(dims=(4, 4, 2), voxel_size=1.0, num_classes=5)


@pytest.fixture
def challenge_spec():
    return GridSpec.challenge()


def random_probgrid(spec: GridSpec, rng, concentration: float = 1.0) -> ProbGrid:
    probs = rng.dirichlet(np.full(spec.num_classes, concentration), spec.num_voxels)
    return ProbGrid.normalized(spec, probs)


def write_json(path, obj):
    import json
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f)
    return str(path)
