"""
Occupancy head forward and reverse-mode backward.

BEV queries (h, w, c) -> two-layer tanh MLP per cell -> voxel features
(h, w, z, ch_v) -> 3D UNet with encoder scales 2, 4, 8 -> per-voxel linear
classifier -> logits (h, w, z, num_classes).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..errors import ShapeError
from ..grid import LabelGrid, VoxelMask
from . import layers, losses
from .params import DECODER_LEVELS, ENCODER_LEVELS, HeadParams

logger = logging.getLogger(__name__)

UNET_FACTOR = 8


@dataclass(frozen=True)
class BevQueryGrid:
    """BEV query embeddings, shape (h, w, c)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ShapeError(f"BEV queries must be (h, w, c) with dims >= 1, got {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]

    @property
    def c(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class VoxelFeatureVolume:
    """Voxel features, shape (h, w, z, ch)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 4 or min(data.shape) < 1:
            raise ShapeError(f"voxel features must be (h, w, z, ch) with dims >= 1, got {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def dims(self):
        return self.data.shape[:3]

    @property
    def ch(self) -> int:
        return self.data.shape[3]


@dataclass
class HeadForward:
    """Forward activations kept for the backward pass."""

    query: np.ndarray
    hidden: Optional[np.ndarray] = None
    volume: Optional[np.ndarray] = None
    features: Optional[np.ndarray] = None
    logits: Optional[np.ndarray] = None
    cache: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class HeadGradients:
    loss: float
    tensors: Dict[str, np.ndarray]
    query: np.ndarray


def _mlp(q: np.ndarray, params: HeadParams):
    h, w, c = q.shape
    w1 = params["mlp.w1"]
    if c != w1.shape[1]:
        raise ShapeError(f"BEV queries have {c} channels, MLP expects {w1.shape[1]}")
    hidden = np.tanh(q.reshape(h * w, c) @ w1.T + params["mlp.b1"])
    out = hidden @ params["mlp.w2"].T + params["mlp.b2"]
    cfg = params.config
    return hidden, out.reshape(h, w, cfg.z, cfg.ch_v)


def mlp_decode(q: BevQueryGrid, params: HeadParams) -> VoxelFeatureVolume:
    """Decode each BEV cell independently into a (z, ch_v) column."""
    return VoxelFeatureVolume(_mlp(q.data, params)[1])


def _check_unet_dims(x: np.ndarray, params: HeadParams):
    if any(d % UNET_FACTOR for d in x.shape[:3]):
        raise ShapeError(f"UNet needs spatial dims divisible by {UNET_FACTOR}, got {x.shape[:3]}")
    if x.shape[3] != params.config.ch_v:
        raise ShapeError(f"UNet expects {params.config.ch_v} input channels, got {x.shape[3]}")


def _conv_tanh(x, params: HeadParams, level: str, cache: Dict):
    pre, windows = layers.conv3d(x, params[f"unet.{level}.weight"], params[f"unet.{level}.bias"])
    out = np.tanh(pre)
    cache[f"{level}.windows"] = windows
    cache[f"{level}.out"] = out
    return out


def _unet(x: np.ndarray, params: HeadParams, cache: Dict) -> np.ndarray:
    _check_unet_dims(x, params)
    skips = []
    for level in ENCODER_LEVELS:
        skip = _conv_tanh(x, params, level, cache)
        skips.append(skip)
        x = layers.avg_pool2(skip)
    for level, skip in zip(DECODER_LEVELS, reversed(skips)):
        x = _conv_tanh(np.concatenate([layers.upsample2(x), skip], axis=-1), params, level, cache)
    return x


def unet3d_forward(v: VoxelFeatureVolume, params: HeadParams) -> VoxelFeatureVolume:
    """Three conv+pool encoder stages, mirrored upsample+skip+conv decoder."""
    return VoxelFeatureVolume(_unet(v.data, params, {}))


def _classify(features: np.ndarray, params: HeadParams) -> np.ndarray:
    weight = params["cls.weight"]
    if features.shape[-1] != weight.shape[1]:
        raise ShapeError(f"classifier expects {weight.shape[1]} channels, got {features.shape[-1]}")
    return features @ weight.T + params["cls.bias"]


def classify(v: VoxelFeatureVolume, params: HeadParams) -> np.ndarray:
    """Per-voxel logits W_cls . features + b_cls, shape (h, w, z, num_classes)."""
    return _classify(v.data, params)


def forward(q: BevQueryGrid, params: HeadParams) -> HeadForward:
    state = HeadForward(query=q.data)
    state.hidden, state.volume = _mlp(q.data, params)
    state.features = _unet(state.volume, params, state.cache)
    state.logits = _classify(state.features, params)
    return state


def loss(q: BevQueryGrid, gt: LabelGrid, mask: Optional[VoxelMask], params: HeadParams) -> float:
    """total_loss of the head's logits with the parameters' loss weights."""
    logits = forward(q, params).logits
    return losses.total_loss(logits, gt, mask, *params.loss_weights)


def _check_alignment(state: HeadForward, gt: LabelGrid):
    if tuple(state.logits.shape[:3]) != tuple(gt.spec.dims):
        raise ShapeError(f"head output {state.logits.shape[:3]} does not match labels {gt.spec.dims}")


def backward(
    q: BevQueryGrid,
    gt: LabelGrid,
    mask: Optional[VoxelMask],
    params: HeadParams,
) -> HeadGradients:
    """Gradients of total_loss w.r.t. every parameter tensor and the queries."""
    state = forward(q, params)
    _check_alignment(state, gt)
    lambda_ce, lambda_dice = params.loss_weights
    value = losses.total_loss(state.logits, gt, mask, lambda_ce, lambda_dice)

    grads: Dict[str, np.ndarray] = {}
    g_logits = losses.total_backward(state.logits, gt, mask, lambda_ce, lambda_dice)
    g_logits = g_logits.reshape(state.logits.shape)

    # classifier
    features = state.features
    flat_features = features.reshape(-1, features.shape[-1])
    flat_g = g_logits.reshape(-1, g_logits.shape[-1])
    grads["cls.weight"] = flat_g.T @ flat_features
    grads["cls.bias"] = flat_g.sum(axis=0)
    g = g_logits @ params["cls.weight"]

    # decoder
    width = params.config.width
    skip_grads = {}
    for level, skip_level in zip(("dec1", "dec2", "dec3"), ("enc1", "enc2", "enc3")):
        g = layers.tanh_backward(g, state.cache[f"{level}.out"])
        g, grads[f"unet.{level}.weight"], grads[f"unet.{level}.bias"] = layers.conv3d_backward(
            g, state.cache[f"{level}.windows"], params[f"unet.{level}.weight"]
        )
        skip_grads[skip_level] = g[..., width:]
        g = layers.upsample2_backward(g[..., :width])

    # encoder, g is now the gradient of the bottom (scale 8) features
    for level in ("enc3", "enc2", "enc1"):
        g = layers.avg_pool2_backward(g) + skip_grads[level]
        g = layers.tanh_backward(g, state.cache[f"{level}.out"])
        g, grads[f"unet.{level}.weight"], grads[f"unet.{level}.bias"] = layers.conv3d_backward(
            g, state.cache[f"{level}.windows"], params[f"unet.{level}.weight"]
        )

    # MLP
    h, w, c = state.query.shape
    g_out = g.reshape(h * w, -1)
    hidden = state.hidden
    grads["mlp.w2"] = g_out.T @ hidden
    grads["mlp.b2"] = g_out.sum(axis=0)
    g_hidden = (g_out @ params["mlp.w2"]) * (1.0 - hidden * hidden)
    grads["mlp.w1"] = g_hidden.T @ state.query.reshape(h * w, c)
    grads["mlp.b1"] = g_hidden.sum(axis=0)
    g_query = (g_hidden @ params["mlp.w1"]).reshape(h, w, c)

    return HeadGradients(loss=value, tensors=grads, query=g_query)
