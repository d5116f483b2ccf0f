"""
Run configuration, grid spec and threshold files (JSON).
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import ValidationError

from ..errors import ConfigError
from ..models import ClassTable, ConversionConfig, Det2OccSettings, GridSpec, RunConfig

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _load_json(path: PathLike, what: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} {path} is not valid JSON: {e.msg} (line {e.lineno})") from None


def load_run_config(path: Optional[PathLike] = None) -> RunConfig:
    """Parse a RunConfig document; None gives the challenge defaults."""
    if path is None:
        return RunConfig()
    data = _load_json(path, "run config")
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"run config {path}: {e}") from None
    logger.info(f"Loaded run config from {path}")
    logger.debug(f"Run config: {config.to_dict()}")
    return config


def load_spec(value: str) -> GridSpec:
    """"default" for the challenge geometry, otherwise a JSON GridSpec file."""
    if value == "default":
        return GridSpec.challenge()
    data = _load_json(value, "grid spec")
    try:
        return GridSpec.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"grid spec {value}: {e}") from None


def load_thresholds(path: PathLike) -> Union[List[float], Dict[str, float]]:
    data = _load_json(path, "thresholds")
    if not isinstance(data, (list, dict)):
        raise ConfigError(f"thresholds {path} must be a JSON list or object")
    return data


def resolve_thresholds(
    raw: Union[List[float], Dict[str, float], None],
    table: ClassTable,
    default: float,
) -> Tuple[float, ...]:
    """
    Per-class thresholds for the semantic classes.

    A list gives one threshold per semantic class. A mapping keys classes by
    name or id; "default" overrides `default` for classes it does not name.
    """
    count = table.num_classes - 1
    if raw is None:
        return (default,) * count
    if isinstance(raw, list):
        if len(raw) != count:
            raise ConfigError(f"thresholds list has {len(raw)} entries, expected {count}")
        return tuple(float(v) for v in raw)

    fallback = float(raw.get("default", default))
    thresholds = [fallback] * count
    for key, value in raw.items():
        if key == "default":
            continue
        if key.isdigit():
            class_id = int(key)
        else:
            try:
                class_id = table.index(key)
            except KeyError as e:
                raise ConfigError(e.args[0]) from None
        if class_id >= count:
            raise ConfigError(f"threshold for {key!r} does not name a semantic class")
        thresholds[class_id] = float(value)
    return tuple(thresholds)


def conversion_config_from(
    settings: Det2OccSettings,
    table: ClassTable,
    thresholds: Union[List[float], Dict[str, float], None] = None,
) -> ConversionConfig:
    """ConversionConfig from settings; `thresholds` replaces settings.thresholds."""
    raw = thresholds if thresholds is not None else settings.thresholds
    allowed = table.dynamic_ids if settings.dynamic_only else None
    if settings.dynamic_only and not allowed:
        logger.warning("dynamic-only conversion with no dynamic classes: every box is dropped")
    try:
        return ConversionConfig(
            thresholds=resolve_thresholds(raw, table, settings.threshold),
            spacing_t=settings.spacing_t,
            allowed_classes=tuple(allowed) if allowed is not None else None,
        )
    except ValidationError as e:
        raise ConfigError(f"det2occ settings: {e}") from None
