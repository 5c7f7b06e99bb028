from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

UNRIPE = 0
RIPE = 1
CLASS_NAMES = ("unripe", "ripe")

Box = Tuple[float, float, float, float]


@dataclass(frozen=True)
class Annotation:
    """
    One ground-truth fruit.

    Boxes and centers are normalized to [0, 1] in (x1, y1, x2, y2) order.
    The center is the annotated picking point and exists only for ripe fruit.
    """
    class_id: int
    box: Box
    center: Optional[Tuple[float, float]] = None

    @property
    def width(self) -> float:
        return self.box[2] - self.box[0]

    @property
    def height(self) -> float:
        return self.box[3] - self.box[1]

    @property
    def area(self) -> float:
        return max(self.width, 0.0) * max(self.height, 0.0)

    def to_pixels(self, size: int) -> np.ndarray:
        return np.asarray(self.box, dtype=np.float64) * size


@dataclass
class Sample:
    """
    An image with its labels.

    `image` is H×W×3 float64 in [0, 1]. `instance_map` is optional H×W int32;
    value k > 0 marks pixels of annotation k-1 (used by copy-paste).
    """
    image_id: str
    image: np.ndarray
    annotations: List[Annotation] = field(default_factory=list)
    instance_map: Optional[np.ndarray] = None
    difficulty: int = 0

    @property
    def size(self) -> int:
        return self.image.shape[0]

    def with_image(self, image: np.ndarray, annotations: List[Annotation] = None,
                   instance_map: Optional[np.ndarray] = None) -> "Sample":
        return replace(
            self,
            image=image,
            annotations=list(self.annotations if annotations is None else annotations),
            instance_map=instance_map,
        )

    def boxes_px(self) -> np.ndarray:
        if not self.annotations:
            return np.zeros((0, 4))
        return np.stack([a.to_pixels(self.size) for a in self.annotations])

    def class_ids(self) -> np.ndarray:
        return np.asarray([a.class_id for a in self.annotations], dtype=np.int64)
