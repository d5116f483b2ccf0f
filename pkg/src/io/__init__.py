"""Readers and writers for grids, parameters, images, boxes and configs."""

from .boxes import parse_box, read_boxes, write_boxes
from .container import (
    FORMAT_VERSION,
    HEADER_SIZE,
    PayloadKind,
    encode_grid,
    read_grid,
    read_images,
    read_params,
    read_tensors,
    write_grid,
    write_images,
    write_params,
    write_tensors,
)
from .run_config import conversion_config_from, load_run_config, load_spec, load_thresholds, resolve_thresholds

__all__ = [
    "FORMAT_VERSION",
    "HEADER_SIZE",
    "PayloadKind",
    "conversion_config_from",
    "encode_grid",
    "load_run_config",
    "load_spec",
    "load_thresholds",
    "parse_box",
    "read_boxes",
    "read_grid",
    "read_images",
    "read_params",
    "read_tensors",
    "resolve_thresholds",
    "write_boxes",
    "write_grid",
    "write_images",
    "write_params",
    "write_tensors",
]
