"""
Data models for the occupancy toolkit.

Value types are pydantic models so that configs, detection boxes and
reports are validated on construction and serialize to JSON directly.
Dense grids live in `src.grid` as numpy-backed dataclasses.
"""

from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    FiniteFloat,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    field_validator,
    model_validator,
)

from .config import CHALLENGE_CONFIG

Strategy = Literal["weighted", "max", "vote"]


class GridSpec(BaseModel):
    """Geometry of the voxel volume.

    `origin` is the minimum corner; cells are half-open
    [origin + i*s, origin + (i+1)*s).
    """

    model_config = ConfigDict(frozen=True)

    dims: Tuple[PositiveInt, PositiveInt, PositiveInt]
    voxel_size: PositiveFloat
    origin: Tuple[FiniteFloat, FiniteFloat, FiniteFloat] = (0.0, 0.0, 0.0)
    num_classes: int = Field(..., ge=2, le=256)
    free_label: int

    @model_validator(mode="before")
    @classmethod
    def _derive_free_label(cls, data):
        if isinstance(data, dict) and "num_classes" in data:
            data = dict(data)
            expected = int(data["num_classes"]) - 1
            if data.get("free_label") is None:
                data["free_label"] = expected
            elif int(data["free_label"]) != expected:
                raise ValueError(f"free_label must be num_classes - 1 = {expected}")
        return data

    @classmethod
    def challenge(cls) -> "GridSpec":
        """The occupancy challenge volume: 200x200x16 voxels of 0.4 m, 18 classes."""
        return cls(**CHALLENGE_CONFIG["grid"])

    @property
    def num_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def upper(self) -> Tuple[float, float, float]:
        """Exclusive maximum corner of the volume."""
        return tuple(o + d * self.voxel_size for o, d in zip(self.origin, self.dims))


class ClassTable(BaseModel):
    """Ordered class names; the last entry is the free class."""

    model_config = ConfigDict(frozen=True)

    names: Tuple[str, ...] = Field(..., min_length=2)
    dynamic: Tuple[str, ...] = ()

    @field_validator("names")
    @classmethod
    def _unique(cls, names):
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique")
        return names

    @model_validator(mode="after")
    def _dynamic_known(self):
        unknown = [n for n in self.dynamic if n not in self.names[:-1]]
        if unknown:
            raise ValueError(f"dynamic classes not in the semantic table: {unknown}")
        return self

    @classmethod
    def challenge(cls) -> "ClassTable":
        classes = CHALLENGE_CONFIG["classes"]
        return cls(names=tuple(classes["names"]), dynamic=tuple(classes["dynamic"]))

    @classmethod
    def for_spec(cls, spec: GridSpec) -> "ClassTable":
        """Challenge table for an 18-class spec, generic names otherwise."""
        table = cls.challenge()
        if table.num_classes == spec.num_classes:
            return table
        names = tuple(f"class_{i}" for i in range(spec.num_classes - 1)) + ("free",)
        return cls(names=names)

    @property
    def num_classes(self) -> int:
        return len(self.names)

    @property
    def free_label(self) -> int:
        return len(self.names) - 1

    @property
    def semantic_names(self) -> Tuple[str, ...]:
        return self.names[:-1]

    @property
    def dynamic_ids(self) -> List[int]:
        return [self.names.index(n) for n in self.dynamic]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown class name: {name!r}") from None


class DetectionBox(BaseModel):
    """Yaw-only oriented 3D box from a detector.

    `size` is (length, width, height) with length along the heading axis at
    yaw = 0; yaw rotates counter-clockwise about +z.
    """

    model_config = ConfigDict(frozen=True)

    center: Tuple[FiniteFloat, FiniteFloat, FiniteFloat]
    size: Tuple[PositiveFloat, PositiveFloat, PositiveFloat]
    yaw: FiniteFloat = 0.0
    class_id: NonNegativeInt
    score: float = Field(..., ge=0.0, le=1.0)


class ConversionConfig(BaseModel):
    """Per-class score thresholds and lattice spacing for det2occ."""

    model_config = ConfigDict(frozen=True)

    thresholds: Tuple[float, ...] = Field(..., min_length=1)
    spacing_t: PositiveFloat = CHALLENGE_CONFIG["det2occ"]["spacing_t"]
    allowed_classes: Optional[Tuple[NonNegativeInt, ...]] = None

    @field_validator("thresholds")
    @classmethod
    def _thresholds_in_range(cls, thresholds):
        for i, t in enumerate(thresholds):
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"threshold for class {i} must be in [0, 1], got {t}")
        return thresholds

    @classmethod
    def uniform(
        cls,
        num_classes: int,
        threshold: float = CHALLENGE_CONFIG["det2occ"]["threshold"],
        spacing_t: float = CHALLENGE_CONFIG["det2occ"]["spacing_t"],
        allowed_classes: Optional[List[int]] = None,
    ) -> "ConversionConfig":
        return cls(
            thresholds=(threshold,) * (num_classes - 1),
            spacing_t=spacing_t,
            allowed_classes=tuple(allowed_classes) if allowed_classes is not None else None,
        )


class EnsembleWeights(BaseModel):
    """One positive weight per fused model."""

    model_config = ConfigDict(frozen=True)

    weights: Tuple[PositiveFloat, ...] = Field(..., min_length=1)

    @classmethod
    def uniform(cls, n: int) -> "EnsembleWeights":
        return cls(weights=(1.0,) * n)

    def normalized(self) -> List[float]:
        total = sum(self.weights)
        return [w / total for w in self.weights]

    def __len__(self) -> int:
        return len(self.weights)


class CutoutSpec(BaseModel):
    """Cutout parameters. Hole dims default to a quarter of the image dims."""

    model_config = ConfigDict(frozen=True)

    num_holes: NonNegativeInt = CHALLENGE_CONFIG["cutout"]["num_holes"]
    hole_h: Optional[PositiveInt] = None
    hole_w: Optional[PositiveInt] = None
    fill: float = CHALLENGE_CONFIG["cutout"]["fill"]
    seed: int = Field(default=CHALLENGE_CONFIG["cutout"]["seed"], ge=0, lt=2**64)

    @classmethod
    def from_fraction(
        cls, h: int, w: int, fraction: float = CHALLENGE_CONFIG["cutout"]["size_fraction"], **kwargs
    ) -> "CutoutSpec":
        return cls(
            hole_h=max(1, int(round(h * fraction))),
            hole_w=max(1, int(round(w * fraction))),
            **kwargs,
        )

    def resolve(self, h: int, w: int) -> "CutoutSpec":
        """Fill in hole dims left unset from the image size."""
        if self.hole_h is not None and self.hole_w is not None:
            return self
        fraction = CHALLENGE_CONFIG["cutout"]["size_fraction"]
        return self.model_copy(update={
            "hole_h": self.hole_h or max(1, int(round(h * fraction))),
            "hole_w": self.hole_w or max(1, int(round(w * fraction))),
        })


class HeadConfig(BaseModel):
    """Dimensions and loss weights of the desk-scale occupancy head."""

    model_config = ConfigDict(frozen=True)

    bev_channels: PositiveInt = CHALLENGE_CONFIG["head"]["bev_channels"]
    hidden: PositiveInt = CHALLENGE_CONFIG["head"]["hidden"]
    z: PositiveInt = CHALLENGE_CONFIG["head"]["z"]
    ch_v: PositiveInt = CHALLENGE_CONFIG["head"]["ch_v"]
    width: PositiveInt = CHALLENGE_CONFIG["head"]["width"]
    ch_out: PositiveInt = CHALLENGE_CONFIG["head"]["ch_out"]
    num_classes: int = Field(default=CHALLENGE_CONFIG["head"]["num_classes"], ge=2)
    lambda_ce: float = Field(default=CHALLENGE_CONFIG["loss"]["lambda_ce"], ge=0.0)
    lambda_dice: float = Field(default=CHALLENGE_CONFIG["loss"]["lambda_dice"], ge=0.0)

    @model_validator(mode="after")
    def _some_loss(self):
        if self.lambda_ce == 0.0 and self.lambda_dice == 0.0:
            raise ValueError("lambda_ce and lambda_dice cannot both be 0")
        return self


class ClassCounts(BaseModel):
    intersection: int = Field(..., ge=0)
    union: int = Field(..., ge=0)


class IoUReport(BaseModel):
    """Per-class IoU over the semantic classes (free excluded) and their mean."""

    class_names: List[str]
    per_class: List[Optional[float]]
    counts: List[ClassCounts]
    miou: Optional[float] = None
    strict_zero: bool = False

    def iou(self, key: Union[int, str]) -> Optional[float]:
        idx = self.class_names.index(key) if isinstance(key, str) else key
        return self.per_class[idx]

    @property
    def num_defined(self) -> int:
        return sum(v is not None for v in self.per_class)

    def to_json_dict(self) -> Dict:
        return {
            "miou": self.miou,
            "per_class": dict(zip(self.class_names, self.per_class)),
            "counts": {
                name: c.model_dump() for name, c in zip(self.class_names, self.counts)
            },
            "strict_zero": self.strict_zero,
        }


class EnsembleStage(BaseModel):
    """One stage of a staged ensemble; inputs name sources or earlier stages."""

    name: str = Field(..., min_length=1)
    inputs: List[str] = Field(..., min_length=1)
    weights: Optional[List[PositiveFloat]] = None
    strategy: Strategy = "weighted"


class EnsembleSettings(BaseModel):
    weights: Optional[List[PositiveFloat]] = None
    strategy: Strategy = CHALLENGE_CONFIG["ensemble"]["strategy"]
    det_weight: PositiveFloat = CHALLENGE_CONFIG["ensemble"]["det_weight"]


class Det2OccSettings(BaseModel):
    threshold: float = Field(default=CHALLENGE_CONFIG["det2occ"]["threshold"], ge=0.0, le=1.0)
    # list indexed by class id, or mapping from class name / id to threshold
    thresholds: Optional[Union[List[float], Dict[str, float]]] = None
    spacing_t: PositiveFloat = CHALLENGE_CONFIG["det2occ"]["spacing_t"]
    dynamic_only: bool = False


class CutoutSettings(BaseModel):
    num_holes: NonNegativeInt = CHALLENGE_CONFIG["cutout"]["num_holes"]
    size_fraction: float = Field(default=CHALLENGE_CONFIG["cutout"]["size_fraction"], gt=0.0, le=1.0)
    fill: float = CHALLENGE_CONFIG["cutout"]["fill"]
    seed: int = Field(default=CHALLENGE_CONFIG["cutout"]["seed"], ge=0, lt=2**64)


class LossWeights(BaseModel):
    lambda_ce: float = Field(default=CHALLENGE_CONFIG["loss"]["lambda_ce"], ge=0.0)
    lambda_dice: float = Field(default=CHALLENGE_CONFIG["loss"]["lambda_dice"], ge=0.0)

    @model_validator(mode="after")
    def _some_loss(self):
        if self.lambda_ce == 0.0 and self.lambda_dice == 0.0:
            raise ValueError("lambda_ce and lambda_dice cannot both be 0")
        return self


class MetricSettings(BaseModel):
    strict_zero: bool = CHALLENGE_CONFIG["metrics"]["strict_zero"]


class RunConfig(BaseModel):
    """Complete run configuration; every omitted field takes its challenge default."""

    model_config = ConfigDict(extra="forbid")

    grid: GridSpec = Field(default_factory=GridSpec.challenge)
    class_names: Optional[List[str]] = None
    ensemble: EnsembleSettings = Field(default_factory=EnsembleSettings)
    det2occ: Det2OccSettings = Field(default_factory=Det2OccSettings)
    cutout: CutoutSettings = Field(default_factory=CutoutSettings)
    loss: LossWeights = Field(default_factory=LossWeights)
    metrics: MetricSettings = Field(default_factory=MetricSettings)
    stages: List[EnsembleStage] = Field(default_factory=list)

    @model_validator(mode="after")
    def _class_names_match_grid(self):
        if self.class_names is not None and len(self.class_names) != self.grid.num_classes:
            raise ValueError(
                f"class_names has {len(self.class_names)} entries, grid has {self.grid.num_classes} classes"
            )
        return self

    def class_table(self) -> ClassTable:
        if self.class_names is None:
            return ClassTable.for_spec(self.grid)
        defaults = ClassTable.challenge()
        dynamic = tuple(n for n in defaults.dynamic if n in self.class_names[:-1])
        return ClassTable(names=tuple(self.class_names), dynamic=dynamic)

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")
