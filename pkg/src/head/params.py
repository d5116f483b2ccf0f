"""
Parameters of the occupancy head: MLP decoder, 3-level 3D UNet and the
per-voxel classifier, stored as named float64 tensors.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from ..config import get_default
from ..errors import ShapeError
from ..models import HeadConfig

logger = logging.getLogger(__name__)

ENCODER_LEVELS = ("enc1", "enc2", "enc3")
DECODER_LEVELS = ("dec3", "dec2", "dec1")
LOSS_TENSOR = "loss.lambdas"


def expected_shapes(config: HeadConfig) -> Dict[str, Tuple[int, ...]]:
    """Name -> shape for every trainable tensor, in a fixed order."""
    c, hidden, width = config.bev_channels, config.hidden, config.width
    out = config.z * config.ch_v
    shapes = {
        "mlp.w1": (hidden, c),
        "mlp.b1": (hidden,),
        "mlp.w2": (out, hidden),
        "mlp.b2": (out,),
    }
    enc_in = {"enc1": config.ch_v, "enc2": width, "enc3": width}
    for level in ENCODER_LEVELS:
        shapes[f"unet.{level}.weight"] = (width, enc_in[level], 3, 3, 3)
        shapes[f"unet.{level}.bias"] = (width,)
    # decoder convs see [upsampled, skip] concatenated on channels
    for level in DECODER_LEVELS:
        out_ch = config.ch_out if level == "dec1" else width
        shapes[f"unet.{level}.weight"] = (out_ch, 2 * width, 3, 3, 3)
        shapes[f"unet.{level}.bias"] = (out_ch,)
    shapes["cls.weight"] = (config.num_classes, config.ch_out)
    shapes["cls.bias"] = (config.num_classes,)
    return shapes


@dataclass
class HeadParams:
    config: HeadConfig
    tensors: Dict[str, np.ndarray]

    def __post_init__(self):
        shapes = expected_shapes(self.config)
        missing = set(shapes) - set(self.tensors)
        extra = set(self.tensors) - set(shapes)
        if missing or extra:
            raise ShapeError(f"parameter names differ: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, shape in shapes.items():
            tensor = np.asarray(self.tensors[name], dtype=np.float64)
            if tensor.shape != shape:
                raise ShapeError(f"{name} has shape {tensor.shape}, expected {shape}")
            self.tensors[name] = tensor

    @classmethod
    def zeros(cls, config: HeadConfig) -> "HeadParams":
        return cls(config, {name: np.zeros(shape) for name, shape in expected_shapes(config).items()})

    @classmethod
    def init(cls, config: HeadConfig, seed: int = 0, scale: Optional[float] = None) -> "HeadParams":
        """Normal weights scaled by 1/sqrt(fan_in), small non-zero biases."""
        scale = get_default("head", "init_scale") if scale is None else scale
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in expected_shapes(config).items():
            if len(shape) == 1:
                tensors[name] = 0.1 * rng.standard_normal(shape)
            else:
                fan_in = int(np.prod(shape[1:]))
                tensors[name] = scale / np.sqrt(fan_in) * rng.standard_normal(shape)
        logger.debug(f"Initialized head parameters with seed {seed}")
        return cls(config, tensors)

    @classmethod
    def from_tensors(cls, tensors: Dict[str, np.ndarray]) -> "HeadParams":
        """Rebuild parameters from an archive, inferring the config from shapes."""
        try:
            w1, w2 = tensors["mlp.w1"], tensors["mlp.w2"]
            enc1 = tensors["unet.enc1.weight"]
            dec1 = tensors["unet.dec1.weight"]
            cls_w = tensors["cls.weight"]
        except KeyError as e:
            raise ShapeError(f"parameter archive lacks {e.args[0]}") from None
        ch_v = enc1.shape[1]
        if w2.shape[0] % ch_v:
            raise ShapeError(f"mlp.w2 rows {w2.shape[0]} not a multiple of ch_v {ch_v}")
        lambdas = tensors.get(LOSS_TENSOR, np.array([
            get_default("loss", "lambda_ce"), get_default("loss", "lambda_dice"),
        ]))
        config = HeadConfig(
            bev_channels=w1.shape[1],
            hidden=w1.shape[0],
            z=w2.shape[0] // ch_v,
            ch_v=ch_v,
            width=enc1.shape[0],
            ch_out=dec1.shape[0],
            num_classes=cls_w.shape[0],
            lambda_ce=float(lambdas[0]),
            lambda_dice=float(lambdas[1]),
        )
        return cls(config, {k: np.array(v) for k, v in tensors.items() if k != LOSS_TENSOR})

    def to_tensors(self) -> Dict[str, np.ndarray]:
        """Named tensors for archiving, loss weights included."""
        out = dict(self.tensors)
        out[LOSS_TENSOR] = np.array(self.loss_weights)
        return out

    @property
    def loss_weights(self) -> Tuple[float, float]:
        return self.config.lambda_ce, self.config.lambda_dice

    def with_loss_weights(self, lambda_ce: float, lambda_dice: float) -> "HeadParams":
        config = self.config.model_copy(update={"lambda_ce": lambda_ce, "lambda_dice": lambda_dice})
        HeadConfig.model_validate(config.model_dump())
        return HeadParams(config, {k: v.copy() for k, v in self.tensors.items()})

    def copy(self) -> "HeadParams":
        return HeadParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self.tensors.items())

    @property
    def size(self) -> int:
        return sum(t.size for t in self.tensors.values())


def sgd_step(params: HeadParams, grads: Dict[str, np.ndarray], lr: float) -> HeadParams:
    """One plain gradient-descent step, returning new parameters."""
    return HeadParams(params.config, {k: v - lr * grads[k] for k, v in params.tensors.items()})
