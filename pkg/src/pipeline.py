"""
Occupancy post-processing pipeline.

Features:
- Masked mIoU evaluation of label or probability grids
- Probability ensembles, optionally joined by detection-box occupancy
- Staged ensembles (backbones -> occupancy models -> + detections)
- Cutout on camera image sets
"""

import logging
import time
from typing import Dict, List, Optional, Sequence, Union

from pydantic import ValidationError

from .augment import ImageSet, cutout
from .det2occ import boxes_to_probgrid
from .ensemble import as_weights, fuse
from .errors import ConfigError, SpecMismatchError
from .grid import LabelGrid, ProbGrid, VoxelMask, argmax_labels
from .io import conversion_config_from
from .metrics import evaluate
from .models import (
    ConversionConfig,
    CutoutSpec,
    DetectionBox,
    EnsembleStage,
    EnsembleWeights,
    GridSpec,
    IoUReport,
    RunConfig,
    Strategy,
)

logger = logging.getLogger(__name__)

Fused = Union[ProbGrid, LabelGrid]


def _override(settings, overrides: dict):
    """Re-validated copy of a settings model with the non-None overrides applied."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    if not updates:
        return settings
    try:
        return type(settings).model_validate({**settings.model_dump(), **updates})
    except ValidationError as e:
        raise ConfigError(str(e)) from None


class OccupancyPipeline:
    """
    Runs the toolkit's operations under one RunConfig.

    Every grid handed to the pipeline must use the configured GridSpec;
    anything else raises SpecMismatchError.
    """

    def __init__(self, config: Optional[RunConfig] = None, spec: Optional[GridSpec] = None):
        start = time.time()
        config = config or RunConfig()
        if spec is not None and spec != config.grid:
            if config.class_names is not None and len(config.class_names) != spec.num_classes:
                raise ConfigError(
                    f"run config names {len(config.class_names)} classes, grid spec has {spec.num_classes}"
                )
            config = config.model_copy(update={"grid": spec})
        self.config = config
        self.spec = config.grid
        self.class_table = config.class_table()
        logger.info(f"OccupancyPipeline ready for {self.spec.dims} x {self.spec.num_classes} classes "
                    f"in {(time.time() - start) * 1000:.1f}ms")

    def _check_spec(self, *grids):
        for grid in grids:
            if grid is not None and grid.spec != self.spec:
                raise SpecMismatchError(f"grid has {grid.spec}, pipeline expects {self.spec}")

    def evaluate(
        self,
        pred: Union[LabelGrid, ProbGrid],
        gt: LabelGrid,
        mask: Optional[VoxelMask] = None,
        strict_zero: Optional[bool] = None,
    ) -> IoUReport:
        """
        Score a prediction against ground truth over the camera mask.

        Args:
            pred: Predicted labels, or probabilities reduced by argmax
            gt: Ground-truth labels
            mask: Camera-visibility mask; None scores every voxel
            strict_zero: Override the configured handling of empty classes
        """
        self._check_spec(pred, gt, mask)
        if isinstance(pred, ProbGrid):
            pred = argmax_labels(pred)
        if strict_zero is None:
            strict_zero = self.config.metrics.strict_zero
        report = evaluate(pred, gt, mask, strict_zero=strict_zero, class_table=self.class_table)
        logger.info(f"Evaluated {self.spec.num_voxels} voxels: mIoU {report.miou}")
        return report

    def conversion_config(self, thresholds=None, **overrides) -> ConversionConfig:
        """ConversionConfig from the run config; keyword overrides replace det2occ settings."""
        settings = self.config.det2occ
        if overrides:
            settings = _override(settings, overrides)
        return conversion_config_from(settings, self.class_table, thresholds)

    def convert_detections(
        self,
        boxes: Sequence[DetectionBox],
        conversion: Optional[ConversionConfig] = None,
    ) -> ProbGrid:
        """Detection boxes to a ProbGrid on the pipeline's grid."""
        conversion = conversion or self.conversion_config()
        return boxes_to_probgrid(boxes, self.spec, conversion)

    def ensemble(
        self,
        grids: Sequence[ProbGrid],
        weights: Optional[List[float]] = None,
        strategy: Optional[Strategy] = None,
        boxes: Optional[Sequence[DetectionBox]] = None,
        det_weight: Optional[float] = None,
        conversion: Optional[ConversionConfig] = None,
    ) -> Fused:
        """
        Fuse occupancy grids, with detection boxes as one more model.

        `weights` has one entry per grid in `grids`; the detection grid gets
        `det_weight`. Settings left as None come from the run config.

        Returns:
            ProbGrid for the weighted and max strategies, LabelGrid for vote
        """
        grids = list(grids)
        if not grids:
            raise ValueError("ensemble needs at least one input grid")
        self._check_spec(*grids)
        settings = self.config.ensemble
        strategy = strategy or settings.strategy
        if weights is None:
            weights = settings.weights
        if weights is not None and len(weights) != len(grids):
            raise ValueError(f"{len(grids)} input grids but {len(weights)} weights")
        weights = list(weights) if weights is not None else [1.0] * len(grids)

        if boxes is not None:
            grids.append(self.convert_detections(boxes, conversion))
            weights.append(det_weight if det_weight is not None else settings.det_weight)
            logger.info(f"Detection grid joins the ensemble with weight {weights[-1]}")

        return fuse(grids, strategy, EnsembleWeights(weights=tuple(weights)))

    def run_stages(
        self,
        sources: Dict[str, ProbGrid],
        stages: Optional[List[EnsembleStage]] = None,
    ) -> Dict[str, Fused]:
        """
        Evaluate ensemble stages in order.

        Stage inputs name sources or earlier stages; a stage fused by vote
        yields labels and cannot feed a later stage.

        Returns:
            Sources and stage results keyed by name
        """
        stages = stages if stages is not None else self.config.stages
        if not stages:
            raise ConfigError("no ensemble stages configured")
        self._check_spec(*sources.values())
        results: Dict[str, Fused] = dict(sources)
        for stage in stages:
            if stage.name in results:
                raise ConfigError(f"stage name {stage.name!r} is already defined")
            inputs = []
            for name in stage.inputs:
                if name not in results:
                    raise ConfigError(
                        f"stage {stage.name!r} input {name!r} is neither a source nor an earlier stage"
                    )
                if isinstance(results[name], LabelGrid):
                    raise ConfigError(f"stage {stage.name!r} input {name!r} is a vote result, not probabilities")
                inputs.append(results[name])
            if stage.weights is not None and len(stage.weights) != len(inputs):
                raise ConfigError(f"stage {stage.name!r} has {len(inputs)} inputs but {len(stage.weights)} weights")
            weights = as_weights(stage.weights, len(inputs))
            results[stage.name] = fuse(inputs, stage.strategy, weights)
            logger.info(f"Stage {stage.name!r}: {stage.strategy} over {stage.inputs}")
        return results

    def cutout_spec(self, h: int, w: int, **overrides) -> CutoutSpec:
        """CutoutSpec for h x w images from the run config; overrides win when not None."""
        settings = _override(self.config.cutout, overrides)
        return CutoutSpec.from_fraction(
            h, w, settings.size_fraction,
            num_holes=settings.num_holes, fill=settings.fill, seed=settings.seed,
        )

    def cutout(self, imgs: ImageSet, spec: Optional[CutoutSpec] = None) -> ImageSet:
        return cutout(imgs, spec or self.cutout_spec(imgs.h, imgs.w))
