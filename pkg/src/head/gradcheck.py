"""
Central finite-difference verification of the head's analytic gradients.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..config import get_default
from ..grid import LabelGrid, VoxelMask
from ..models import GridSpec, HeadConfig
from . import model
from .model import BevQueryGrid
from .params import HeadParams

logger = logging.getLogger(__name__)

# gradients smaller than this are compared in absolute terms
REL_FLOOR = 1e-3


def relative_error(analytic: float, numeric: float, floor: float = REL_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


@dataclass
class ToyProblem:
    query: BevQueryGrid
    gt: LabelGrid
    mask: Optional[VoxelMask]
    params: HeadParams

    def args(self):
        return self.query, self.gt, self.mask, self.params


@dataclass
class GradCheckResult:
    max_rel_error: float = 0.0
    worst: Tuple[str, Tuple[int, ...]] = ("", ())
    checked: int = 0
    per_tensor: Dict[str, float] = field(default_factory=dict)

    def passed(self, tolerance: float = get_default("selfcheck", "tolerance")) -> bool:
        return self.max_rel_error <= tolerance


def make_toy_problem(
    seed: int,
    config: Optional[HeadConfig] = None,
    bev_size: int = 8,
    mask_fraction: float = 0.8,
) -> ToyProblem:
    """Random queries, labels, camera mask and parameters on a bev_size^2 x z volume."""
    config = config or HeadConfig()
    rng = np.random.default_rng(seed)
    spec = GridSpec(
        dims=(bev_size, bev_size, config.z),
        voxel_size=get_default("grid", "voxel_size"),
        num_classes=config.num_classes,
    )
    query = BevQueryGrid(rng.standard_normal((bev_size, bev_size, config.bev_channels)))
    gt = LabelGrid(spec, rng.integers(0, spec.num_classes, spec.num_voxels))
    bits = rng.random(spec.num_voxels) < mask_fraction
    bits[0] = True
    return ToyProblem(query, gt, VoxelMask(spec, bits), HeadParams.init(config, seed))


def gradient_check(
    q: BevQueryGrid,
    gt: LabelGrid,
    mask: Optional[VoxelMask],
    params: HeadParams,
    step: float = get_default("selfcheck", "fd_step"),
    entries_per_tensor: Optional[int] = None,
    seed: int = 0,
) -> GradCheckResult:
    """
    Compare analytic gradients with central differences.

    Args:
        q, gt, mask: Inputs, labels and camera mask of the toy problem
        params: Parameters to differentiate at
        step: Finite-difference step
        entries_per_tensor: Check a random subset of this many entries per
            tensor; None checks every entry

    Returns:
        GradCheckResult with the largest relative error and where it occurred
    """
    analytic = model.backward(q, gt, mask, params).tensors
    work = params.copy()
    rng = np.random.default_rng(seed)
    result = GradCheckResult()

    for name, tensor in work.items():
        indices = np.arange(tensor.size)
        if entries_per_tensor is not None and entries_per_tensor < tensor.size:
            indices = rng.choice(tensor.size, size=entries_per_tensor, replace=False)
        worst_here = 0.0
        for flat in indices:
            idx = np.unravel_index(int(flat), tensor.shape)
            original = tensor[idx]
            tensor[idx] = original + step
            plus = model.loss(q, gt, mask, work)
            tensor[idx] = original - step
            minus = model.loss(q, gt, mask, work)
            tensor[idx] = original
            numeric = (plus - minus) / (2 * step)
            err = relative_error(float(analytic[name][idx]), numeric)
            worst_here = max(worst_here, err)
            if err > result.max_rel_error:
                result.max_rel_error = err
                result.worst = (name, tuple(int(i) for i in idx))
            result.checked += 1
        result.per_tensor[name] = worst_here

    logger.info(
        f"Gradient check: {result.checked} entries, max rel err {result.max_rel_error:.3e} at {result.worst}"
    )
    return result
