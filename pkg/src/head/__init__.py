"""Desk-scale differentiable occupancy head."""

from .gradcheck import GradCheckResult, ToyProblem, gradient_check, make_toy_problem, relative_error
from .losses import ce_loss, dice_loss, softmax, total_loss
from .model import (
    BevQueryGrid,
    HeadForward,
    HeadGradients,
    VoxelFeatureVolume,
    backward,
    classify,
    forward,
    loss,
    mlp_decode,
    unet3d_forward,
)
from .params import HeadParams, expected_shapes, sgd_step

__all__ = [
    "BevQueryGrid",
    "GradCheckResult",
    "HeadForward",
    "HeadGradients",
    "HeadParams",
    "ToyProblem",
    "VoxelFeatureVolume",
    "backward",
    "ce_loss",
    "classify",
    "dice_loss",
    "expected_shapes",
    "forward",
    "gradient_check",
    "loss",
    "make_toy_problem",
    "mlp_decode",
    "relative_error",
    "sgd_step",
    "softmax",
    "total_loss",
    "unet3d_forward",
]
