from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from utils.sample import Sample


@dataclass(frozen=True)
class GroundTruth:
    """A labeled fruit in input-pixel coordinates."""
    class_id: int
    box: Tuple[float, float, float, float]
    center: Optional[Tuple[float, float]] = None

    def box_array(self) -> np.ndarray:
        return np.asarray(self.box, dtype=np.float64)


def ground_truths(sample: Sample) -> List[GroundTruth]:
    size = sample.size
    out = []
    for ann in sample.annotations:
        center = None if ann.center is None else (ann.center[0] * size, ann.center[1] * size)
        out.append(GroundTruth(ann.class_id, tuple(float(v) for v in ann.to_pixels(size)), center))
    return out


def gt_boxes(gts: List[GroundTruth]) -> np.ndarray:
    if not gts:
        return np.zeros((0, 4))
    return np.stack([g.box_array() for g in gts])
