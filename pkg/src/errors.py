"""
Error hierarchy shared by every module and mapped to CLI exit codes.
"""

from typing import Optional


class OccError(Exception):
    """Base class for toolkit errors. `exit_code` is what the CLI returns."""

    exit_code = 2


class ShapeError(OccError, ValueError):
    """Array or volume shapes do not fit the operation."""


class SpecMismatchError(ShapeError):
    """Two grids that must share a GridSpec do not."""

    def __init__(self, detail: str = ""):
        message = "spec mismatch"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class GridValidationError(OccError, ValueError):
    """A grid violates a type invariant. `voxel` is the first offending voxel."""

    def __init__(self, message: str, voxel: Optional[int] = None):
        self.voxel = voxel
        if voxel is not None:
            message = f"{message} (first offending voxel {voxel})"
        super().__init__(message)


class GridFormatError(OccError):
    """An OCCK file is malformed. `offset` is the byte where decoding failed."""

    def __init__(self, message: str, offset: int = 0):
        self.offset = offset
        super().__init__(f"{message} at byte offset {offset}")


class TruncatedPayloadError(GridFormatError):
    """The payload is shorter than the header announces."""


class BoxFileError(OccError, ValueError):
    """A detection box line could not be parsed or validated."""

    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ConfigError(OccError, ValueError):
    """A run configuration, thresholds file or stage list is invalid."""
