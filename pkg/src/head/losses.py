"""
Occupancy losses: masked cross-entropy, soft dice over all classes, and
their weighted sum. Logits are (..., num_classes) aligned with the label
grid's canonical voxel order.
"""

from typing import Optional, Tuple

import numpy as np

from ..config import get_default
from ..errors import ShapeError
from ..grid import LabelGrid, VoxelMask

DICE_EPS = get_default("loss", "dice_eps")


def flat_logits(logits: np.ndarray, gt: LabelGrid) -> np.ndarray:
    """(num_voxels, num_classes) view of logits, checked against gt."""
    spec = gt.spec
    arr = np.asarray(logits, dtype=np.float64)
    if arr.size != spec.num_voxels * spec.num_classes or arr.shape[-1] != spec.num_classes:
        raise ShapeError(
            f"logits shape {arr.shape} does not fit {spec.num_voxels} voxels x {spec.num_classes} classes"
        )
    return arr.reshape(spec.num_voxels, spec.num_classes)


def log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(x: np.ndarray) -> np.ndarray:
    shifted = np.exp(x - x.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def _included(gt: LabelGrid, mask: Optional[VoxelMask]) -> np.ndarray:
    if mask is None:
        return np.ones(gt.spec.num_voxels, dtype=np.bool_)
    if mask.spec != gt.spec:
        raise ShapeError("mask and labels cover different grids")
    if not mask.bits.any():
        raise ValueError("cross-entropy over an empty voxel set")
    return mask.bits


def _one_hot(gt: LabelGrid) -> np.ndarray:
    g = np.zeros((gt.spec.num_voxels, gt.spec.num_classes))
    g[np.arange(gt.spec.num_voxels), gt.labels] = 1.0
    return g


def ce_loss(logits: np.ndarray, gt: LabelGrid, mask: Optional[VoxelMask] = None) -> float:
    """Mean of -log softmax(logits)[gt] over included voxels."""
    x = flat_logits(logits, gt)
    included = _included(gt, mask)
    picked = log_softmax(x)[np.arange(x.shape[0]), gt.labels]
    return float(-picked[included].mean())


def ce_backward(logits: np.ndarray, gt: LabelGrid, mask: Optional[VoxelMask] = None) -> np.ndarray:
    x = flat_logits(logits, gt)
    included = _included(gt, mask)
    grad = softmax(x) - _one_hot(gt)
    grad *= included[:, None] / included.sum()
    return grad


def _dice_terms(p: np.ndarray, g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    numerator = 2.0 * (p * g).sum(axis=0) + DICE_EPS
    denominator = p.sum(axis=0) + g.sum(axis=0) + DICE_EPS
    return numerator, denominator


def dice_loss(logits: np.ndarray, gt: LabelGrid) -> float:
    """Mean over every class (free included) of 1 - (2|P.G| + eps) / (|P| + |G| + eps)."""
    p = softmax(flat_logits(logits, gt))
    numerator, denominator = _dice_terms(p, _one_hot(gt))
    return float((1.0 - numerator / denominator).mean())


def dice_backward(logits: np.ndarray, gt: LabelGrid) -> np.ndarray:
    p = softmax(flat_logits(logits, gt))
    g = _one_hot(gt)
    numerator, denominator = _dice_terms(p, g)
    k = p.shape[1]
    grad_p = -(2.0 * g / denominator - numerator / denominator ** 2) / k
    return p * (grad_p - (grad_p * p).sum(axis=1, keepdims=True))


def total_loss(
    logits: np.ndarray,
    gt: LabelGrid,
    mask: Optional[VoxelMask],
    lambda_ce: float,
    lambda_dice: float,
) -> float:
    """lambda_ce * ce_loss + lambda_dice * dice_loss. A zero weight skips its term."""
    if lambda_ce < 0 or lambda_dice < 0:
        raise ValueError("loss weights must be non-negative")
    loss = 0.0
    if lambda_ce:
        loss += lambda_ce * ce_loss(logits, gt, mask)
    if lambda_dice:
        loss += lambda_dice * dice_loss(logits, gt)
    return loss


def total_backward(
    logits: np.ndarray,
    gt: LabelGrid,
    mask: Optional[VoxelMask],
    lambda_ce: float,
    lambda_dice: float,
) -> np.ndarray:
    """Gradient of total_loss w.r.t. logits, (num_voxels, num_classes)."""
    grad = np.zeros((gt.spec.num_voxels, gt.spec.num_classes))
    if lambda_ce:
        grad += lambda_ce * ce_backward(logits, gt, mask)
    if lambda_dice:
        grad += lambda_dice * dice_backward(logits, gt)
    return grad
