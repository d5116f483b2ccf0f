"""
Detection boxes as JSON lines, one box per line:

    {"center": [x, y, z], "size": [l, w, h], "yaw": r, "class_id": c, "score": s}
"""

import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

from pydantic import ValidationError

from ..errors import BoxFileError
from ..models import DetectionBox
from ..utils import atomic_write

logger = logging.getLogger(__name__)


def _describe(error: ValidationError) -> str:
    first = error.errors()[0]
    where = ".".join(str(part) for part in first["loc"])
    return f"{where}: {first['msg']}" if where else first["msg"]


def parse_box(line: str, line_no: int, num_classes: Optional[int] = None) -> DetectionBox:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise BoxFileError(f"malformed JSON ({e.msg})", line_no) from None
    if not isinstance(obj, dict):
        raise BoxFileError("expected a JSON object", line_no)
    try:
        box = DetectionBox.model_validate(obj)
    except ValidationError as e:
        raise BoxFileError(f"invalid box, {_describe(e)}", line_no) from None
    if num_classes is not None and box.class_id >= num_classes - 1:
        raise BoxFileError(f"class_id {box.class_id} is not a semantic class of {num_classes}", line_no)
    return box


def read_boxes(path: Union[str, Path], num_classes: Optional[int] = None) -> List[DetectionBox]:
    """
    Parse a detection JSONL file; blank lines are skipped.

    With `num_classes`, class ids must name a semantic class (below the free label).
    """
    boxes = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            boxes.append(parse_box(line, line_no, num_classes))
    logger.info(f"Read {len(boxes)} boxes from {path}")
    return boxes


def write_boxes(path: Union[str, Path], boxes: Sequence[DetectionBox]):
    with atomic_write(path, "w") as f:
        for box in boxes:
            f.write(json.dumps(box.model_dump()) + "\n")
    logger.info(f"Wrote {len(boxes)} boxes to {path}")
