"""
Volume operators with their adjoints, channels-last (H, W, Z, C).

Every forward returns what its backward needs; backward functions take the
upstream gradient and return gradients for their inputs and parameters.
"""

from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError


def conv3d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """3x3x3 convolution, stride 1, zero padding 1. weight is (out, in, 3, 3, 3)."""
    if weight.shape[1] != x.shape[-1]:
        raise ShapeError(f"conv expects {weight.shape[1]} input channels, got {x.shape[-1]}")
    padded = np.pad(x, ((1, 1), (1, 1), (1, 1), (0, 0)))
    windows = sliding_window_view(padded, (3, 3, 3), axis=(0, 1, 2))  # (H, W, Z, in, 3, 3, 3)
    out = np.tensordot(windows, weight, axes=([3, 4, 5, 6], [1, 2, 3, 4])) + bias
    return out, windows


def conv3d_backward(
    grad_out: np.ndarray, windows: np.ndarray, weight: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (grad_x, grad_weight, grad_bias)."""
    grad_weight = np.tensordot(grad_out, windows, axes=([0, 1, 2], [0, 1, 2]))
    grad_bias = grad_out.sum(axis=(0, 1, 2))

    h, w, z, _ = grad_out.shape
    grad_padded = np.zeros((h + 2, w + 2, z + 2, weight.shape[1]))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                grad_padded[i:i + h, j:j + w, k:k + z] += grad_out @ weight[:, :, i, j, k]
    return grad_padded[1:-1, 1:-1, 1:-1], grad_weight, grad_bias


def avg_pool2(x: np.ndarray) -> np.ndarray:
    h, w, z, c = x.shape
    if h % 2 or w % 2 or z % 2:
        raise ShapeError(f"cannot halve spatial dims {(h, w, z)}")
    return x.reshape(h // 2, 2, w // 2, 2, z // 2, 2, c).mean(axis=(1, 3, 5))


def avg_pool2_backward(grad_out: np.ndarray) -> np.ndarray:
    return upsample2(grad_out) / 8.0


def upsample2(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour 2x upsampling."""
    return x.repeat(2, axis=0).repeat(2, axis=1).repeat(2, axis=2)


def upsample2_backward(grad_out: np.ndarray) -> np.ndarray:
    h, w, z, c = grad_out.shape
    return grad_out.reshape(h // 2, 2, w // 2, 2, z // 2, 2, c).sum(axis=(1, 3, 5))


def tanh_backward(grad_out: np.ndarray, activated: np.ndarray) -> np.ndarray:
    return grad_out * (1.0 - activated * activated)
