"""
Probability-grid ensembling.

weighted_average is the fusion used for the final submissions; max_prob_fuse
and vote_fuse are the baselines it is compared against. Every rule is local
to a voxel, so results do not depend on evaluation order.
"""

import logging
from typing import List, Optional, Sequence, Union

import numpy as np

from ..errors import ShapeError
from ..grid import LabelGrid, ProbGrid, check_same_spec
from ..models import EnsembleWeights, Strategy

logger = logging.getLogger(__name__)


def _check_inputs(grids: Sequence[ProbGrid]):
    if not grids:
        raise ValueError("ensemble needs at least one grid")
    check_same_spec(*grids)


def weighted_average(grids: Sequence[ProbGrid], weights: Optional[EnsembleWeights] = None) -> ProbGrid:
    """Convex combination sum_i (w_i / sum w) * p_i, voxel by voxel."""
    _check_inputs(grids)
    if weights is None:
        weights = EnsembleWeights.uniform(len(grids))
    if len(weights) != len(grids):
        raise ShapeError(f"{len(grids)} grids but {len(weights)} weights")

    normalized = weights.normalized()
    out = np.multiply(grids[0].probs, normalized[0])
    scratch = np.empty_like(out) if len(grids) > 1 else None
    for grid, w in zip(grids[1:], normalized[1:]):
        np.multiply(grid.probs, w, out=scratch)
        out += scratch
    logger.info(f"Weighted average of {len(grids)} grids, weights {list(weights.weights)}")
    return ProbGrid(grids[0].spec, out)


def max_prob_fuse(grids: Sequence[ProbGrid]) -> ProbGrid:
    """Per voxel, copy the whole distribution of the most confident model.

    Confidence is the model's maximum class probability at that voxel; ties
    go to the lowest model index.
    """
    _check_inputs(grids)
    peaks = np.stack([g.probs.max(axis=1) for g in grids])
    winner = peaks.argmax(axis=0)
    out = np.array(grids[0].probs)
    for i, grid in enumerate(grids[1:], start=1):
        chosen = winner == i
        out[chosen] = grid.probs[chosen]
    logger.info(f"Max-probability fusion of {len(grids)} grids")
    return ProbGrid(grids[0].spec, out)


def vote_fuse(grids: Sequence[ProbGrid]) -> LabelGrid:
    """Per voxel, each model votes for its argmax; most votes wins, ties to the lowest class."""
    _check_inputs(grids)
    spec = grids[0].spec
    tally = np.zeros((spec.num_voxels, spec.num_classes), dtype=np.int32)
    rows = np.arange(spec.num_voxels)
    for grid in grids:
        tally[rows, grid.probs.argmax(axis=1)] += 1
    logger.info(f"Majority vote over {len(grids)} grids")
    return LabelGrid(spec, tally.argmax(axis=1).astype(np.uint8))


def fuse(
    grids: Sequence[ProbGrid],
    strategy: Strategy = "weighted",
    weights: Optional[EnsembleWeights] = None,
) -> Union[ProbGrid, LabelGrid]:
    """Dispatch to one fusion rule. Weights only apply to "weighted"."""
    if strategy == "weighted":
        return weighted_average(grids, weights)
    if weights is not None and len(weights) != len(grids):
        raise ShapeError(f"{len(grids)} grids but {len(weights)} weights")
    if strategy == "max":
        return max_prob_fuse(grids)
    if strategy == "vote":
        return vote_fuse(grids)
    raise ValueError(f"unknown ensemble strategy: {strategy!r}")


def as_weights(values: Optional[List[float]], n: int) -> EnsembleWeights:
    """Weights from a plain list, uniform when None."""
    if values is None:
        return EnsembleWeights.uniform(n)
    return EnsembleWeights(weights=tuple(values))
