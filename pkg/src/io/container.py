"""
OCCK v1 container: a 56-byte little-endian header followed by a raw payload.

    0   4s   magic "OCCK"
    4   u8   version (1)
    5   u8   payload kind
    6   2x   reserved, zero
    8   4u32 nx, ny, nz, num_classes   (kind 4: count, 0, 0, 0; kinds 5/6: n, h, w, ch)
    24  4f64 voxel_size, x0, y0, z0    (zero for kinds 4-6)
    56       payload

Every reader checks the header field by field and reports the byte offset
of the first field it could not accept.
"""

import logging
import struct
from enum import IntEnum
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np
from pydantic import ValidationError

from ..augment import ImageSet
from ..errors import GridFormatError, TruncatedPayloadError
from ..grid import LabelGrid, ProbGrid, VoxelMask
from ..head import HeadParams
from ..models import GridSpec
from ..utils import atomic_write

logger = logging.getLogger(__name__)

MAGIC = b"OCCK"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sBBBBIIIIdddd")
HEADER_SIZE = HEADER.size  # 56
SLOTS_OFFSET = 8
GEOMETRY_OFFSET = 24

PathLike = Union[str, Path]
Grid = Union[LabelGrid, ProbGrid, VoxelMask]


class PayloadKind(IntEnum):
    LABELS = 1
    PROBS = 2
    MASK = 3
    TENSORS = 4
    IMAGES_U8 = 5
    IMAGES_F64 = 6


GRID_KINDS = (PayloadKind.LABELS, PayloadKind.PROBS, PayloadKind.MASK)
IMAGE_KINDS = (PayloadKind.IMAGES_U8, PayloadKind.IMAGES_F64)


def _pack_header(kind: PayloadKind, slots: Tuple[int, int, int, int], geometry=(0.0, 0.0, 0.0, 0.0)) -> bytes:
    return HEADER.pack(MAGIC, FORMAT_VERSION, int(kind), 0, 0, *slots, *geometry)


def _grid_header(kind: PayloadKind, spec: GridSpec) -> bytes:
    return _pack_header(kind, (*spec.dims, spec.num_classes), (spec.voxel_size, *spec.origin))


def _parse_header(data: bytes) -> Tuple[PayloadKind, Tuple[int, ...], Tuple[float, ...]]:
    if len(data) < len(MAGIC) or data[:4] != MAGIC:
        raise GridFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", 0)
    if len(data) < HEADER_SIZE:
        raise TruncatedPayloadError(f"header needs {HEADER_SIZE} bytes, file has {len(data)}", len(data))
    fields = HEADER.unpack_from(data)
    _, version, kind, r0, r1 = fields[:5]
    if version != FORMAT_VERSION:
        raise GridFormatError(f"unsupported version {version}", 4)
    try:
        kind = PayloadKind(kind)
    except ValueError:
        raise GridFormatError(f"unknown payload kind {kind}", 5) from None
    if r0 or r1:
        raise GridFormatError("reserved bytes must be zero", 6 if r0 else 7)
    return kind, fields[5:9], fields[9:13]


def _read(path: PathLike) -> Tuple[PayloadKind, Tuple[int, ...], Tuple[float, ...], memoryview]:
    data = Path(path).read_bytes()
    kind, slots, geometry = _parse_header(data)
    return kind, slots, geometry, memoryview(data)[HEADER_SIZE:]


def _check_length(payload: memoryview, expected: int):
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"payload has {len(payload)} bytes, header announces {expected}", HEADER_SIZE + len(payload)
        )
    if len(payload) > expected:
        raise GridFormatError(f"{len(payload) - expected} trailing bytes after payload", HEADER_SIZE + expected)


def _check_zero_geometry(geometry: Tuple[float, ...]):
    for i, value in enumerate(geometry):
        if value != 0.0:
            raise GridFormatError("geometry slots must be zero for this payload kind", GEOMETRY_OFFSET + 8 * i)


def _spec_from_header(slots: Tuple[int, ...], geometry: Tuple[float, ...]) -> GridSpec:
    nx, ny, nz, num_classes = slots
    voxel_size, x0, y0, z0 = geometry
    try:
        return GridSpec(dims=(nx, ny, nz), voxel_size=voxel_size, origin=(x0, y0, z0), num_classes=num_classes)
    except ValidationError as e:
        first = e.errors()[0]
        loc = first["loc"][0] if first["loc"] else ""
        offset = GEOMETRY_OFFSET if loc in ("voxel_size", "origin") else SLOTS_OFFSET
        raise GridFormatError(f"invalid grid geometry: {first['msg']}", offset) from None


def _decode_grid(kind: PayloadKind, spec: GridSpec, payload: memoryview) -> Grid:
    n = spec.num_voxels
    if kind == PayloadKind.PROBS:
        _check_length(payload, n * spec.num_classes * 8)
        probs = np.frombuffer(payload, dtype="<f8").reshape(n, spec.num_classes)
        return ProbGrid.normalized(spec, probs)
    _check_length(payload, n)
    values = np.frombuffer(payload, dtype=np.uint8).copy()
    if kind == PayloadKind.LABELS:
        return LabelGrid(spec, values)
    return VoxelMask(spec, values)


def read_grid(path: PathLike) -> Grid:
    """
    Decode a LabelGrid, ProbGrid or VoxelMask from an OCCK file.

    Probabilities are validated with the 1e-6 tolerance and renormalized
    exactly in memory.

    Raises:
        GridFormatError: bad magic, version, kind or geometry (with byte offset)
        TruncatedPayloadError: payload shorter than the header announces
        GridValidationError: decoded values violate the grid invariants
    """
    kind, slots, geometry, payload = _read(path)
    if kind not in GRID_KINDS:
        raise GridFormatError(f"payload kind {kind.value} ({kind.name.lower()}) is not a grid", 5)
    grid = _decode_grid(kind, _spec_from_header(slots, geometry), payload)
    logger.info(f"Read {type(grid).__name__} {grid.spec.dims} from {path}")
    return grid


def encode_grid(grid: Grid) -> bytes:
    if isinstance(grid, LabelGrid):
        return _grid_header(PayloadKind.LABELS, grid.spec) + grid.labels.tobytes()
    if isinstance(grid, ProbGrid):
        return _grid_header(PayloadKind.PROBS, grid.spec) + grid.probs.astype("<f8", copy=False).tobytes()
    if isinstance(grid, VoxelMask):
        return _grid_header(PayloadKind.MASK, grid.spec) + grid.bits.astype(np.uint8).tobytes()
    raise TypeError(f"cannot encode {type(grid).__name__} as a grid")


def write_grid(path: PathLike, grid: Grid):
    """Write a grid atomically; equal grids give byte-identical files."""
    data = encode_grid(grid)
    with atomic_write(path) as handle:
        handle.write(data)
    logger.info(f"Wrote {type(grid).__name__} {grid.spec.dims} to {path} ({len(data)} bytes)")


def encode_tensors(tensors: Dict[str, np.ndarray]) -> bytes:
    """Named-tensor archive payload kind 4, tensors in the dict's order."""
    parts = [_pack_header(PayloadKind.TENSORS, (len(tensors), 0, 0, 0))]
    for name, tensor in tensors.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name[:32]}...")
        tensor = np.asarray(tensor, dtype=np.float64)
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack(f"<I{tensor.ndim}I", tensor.ndim, *tensor.shape))
        parts.append(tensor.astype("<f8").tobytes())
    return b"".join(parts)


def _take(payload: memoryview, pos: int, size: int, what: str) -> memoryview:
    if pos + size > len(payload):
        raise TruncatedPayloadError(f"{what} needs {size} bytes", HEADER_SIZE + len(payload))
    return payload[pos:pos + size]


def decode_tensors(slots: Tuple[int, ...], geometry: Tuple[float, ...], payload: memoryview) -> Dict[str, np.ndarray]:
    count = slots[0]
    for i, value in enumerate(slots[1:], start=1):
        if value:
            raise GridFormatError("unused count slots must be zero", SLOTS_OFFSET + 4 * i)
    _check_zero_geometry(geometry)

    tensors: Dict[str, np.ndarray] = {}
    pos = 0
    for _ in range(count):
        start = pos
        (name_len,) = struct.unpack("<H", _take(payload, pos, 2, "name length"))
        pos += 2
        raw_name = _take(payload, pos, name_len, "tensor name")
        try:
            name = bytes(raw_name).decode("utf-8")
        except UnicodeDecodeError:
            raise GridFormatError("tensor name is not UTF-8", HEADER_SIZE + pos) from None
        if name in tensors:
            raise GridFormatError(f"duplicate tensor {name!r}", HEADER_SIZE + start)
        pos += name_len
        (rank,) = struct.unpack("<I", _take(payload, pos, 4, "rank"))
        pos += 4
        shape = struct.unpack(f"<{rank}I", _take(payload, pos, 4 * rank, "dims"))
        pos += 4 * rank
        size = int(np.prod(shape, dtype=np.int64)) * 8
        data = _take(payload, pos, size, f"data of {name!r}")
        tensors[name] = np.frombuffer(data, dtype="<f8").reshape(shape).astype(np.float64)
        pos += size
    if pos != len(payload):
        raise GridFormatError(f"{len(payload) - pos} trailing bytes after archive", HEADER_SIZE + pos)
    return tensors


def read_tensors(path: PathLike) -> Dict[str, np.ndarray]:
    kind, slots, geometry, payload = _read(path)
    if kind != PayloadKind.TENSORS:
        raise GridFormatError(f"payload kind {kind.value} is not a tensor archive", 5)
    return decode_tensors(slots, geometry, payload)


def write_tensors(path: PathLike, tensors: Dict[str, np.ndarray]):
    data = encode_tensors(tensors)
    with atomic_write(path) as handle:
        handle.write(data)
    logger.info(f"Wrote {len(tensors)} tensors to {path}")


def read_params(path: PathLike) -> HeadParams:
    """Head parameters from a named-tensor archive."""
    params = HeadParams.from_tensors(read_tensors(path))
    logger.info(f"Read {params.size} head parameters from {path}")
    return params


def write_params(path: PathLike, params: HeadParams):
    write_tensors(path, params.to_tensors())


def encode_images(imgs: ImageSet) -> bytes:
    if imgs.data.dtype == np.uint8:
        kind, payload = PayloadKind.IMAGES_U8, imgs.data.tobytes()
    else:
        kind, payload = PayloadKind.IMAGES_F64, imgs.data.astype("<f8").tobytes()
    return _pack_header(kind, imgs.data.shape) + payload


def read_images(path: PathLike) -> ImageSet:
    kind, slots, geometry, payload = _read(path)
    if kind not in IMAGE_KINDS:
        raise GridFormatError(f"payload kind {kind.value} is not an image set", 5)
    for i, value in enumerate(slots):
        if value < 1:
            raise GridFormatError("image set dims must be >= 1", SLOTS_OFFSET + 4 * i)
    _check_zero_geometry(geometry)
    count = int(np.prod(slots, dtype=np.int64))
    if kind == PayloadKind.IMAGES_U8:
        _check_length(payload, count)
        data = np.frombuffer(payload, dtype=np.uint8).copy()
    else:
        _check_length(payload, count * 8)
        data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    imgs = ImageSet(data.reshape(slots))
    logger.info(f"Read {imgs.n} images of {imgs.h}x{imgs.w}x{imgs.ch} from {path}")
    return imgs


def write_images(path: PathLike, imgs: ImageSet):
    data = encode_images(imgs)
    with atomic_write(path) as handle:
        handle.write(data)
    logger.info(f"Wrote {imgs.n} images to {path}")
