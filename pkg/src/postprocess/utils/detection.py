import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from utils.errors import DataError

logger = logging.getLogger(__name__)

Box = Tuple[float, float, float, float]


@dataclass(frozen=True)
class Detection:
    """
    One detection in input-pixel coordinates.

    `center` is the picking point and is set only for ripe detections.
    `level` and `cell` record where on the head the detection was decoded.
    """
    class_id: int
    score: float
    box: Box
    center: Optional[Tuple[float, float]] = None
    level: Optional[int] = None
    cell: Optional[Tuple[int, int]] = None

    def box_array(self) -> np.ndarray:
        return np.asarray(self.box, dtype=np.float64)


def boxes_of(dets: List[Detection]) -> np.ndarray:
    if not dets:
        return np.zeros((0, 4))
    return np.stack([d.box_array() for d in dets])


def format_detection(image_id: str, det: Detection) -> str:
    fields = [image_id, str(det.class_id), f"{det.score:.6f}"] + [f"{v:.3f}" for v in det.box]
    if det.center is not None:
        fields += [f"{v:.3f}" for v in det.center]
    return " ".join(fields)


def parse_detection_line(line: str) -> Tuple[str, Detection]:
    parts = line.split()
    if len(parts) not in (7, 9):
        raise DataError(f"detection line needs 7 or 9 fields, got {len(parts)}: {line!r}")
    try:
        class_id = int(parts[1])
        values = [float(v) for v in parts[2:]]
    except ValueError as exc:
        raise DataError(f"malformed detection line {line!r}: {exc}") from exc
    box = tuple(values[1:5])
    if not (box[0] < box[2] and box[1] < box[3]):
        raise DataError(f"degenerate box in detection line {line!r}")
    center = tuple(values[5:7]) if len(values) == 7 else None
    return parts[0], Detection(class_id, values[0], box, center)


def write_detections(path: str, detections: Dict[str, List[Detection]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for image_id, dets in detections.items():
            for det in dets:
                f.write(format_detection(image_id, det) + "\n")
    logger.debug("wrote detections for %d images to %s", len(detections), path)


def read_detections(path: str) -> Dict[str, List[Detection]]:
    out: Dict[str, List[Detection]] = {}
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read detections {path}: {exc}") from exc
    for line in lines:
        if not line.strip():
            continue
        image_id, det = parse_detection_line(line)
        out.setdefault(image_id, []).append(det)
    return out
