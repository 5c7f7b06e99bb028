from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

# (stride, rows, cols) of one head scale
HeadGeometry = Tuple[int, int, int]


@dataclass
class Match:
    """One positive cell: where it is, which ground truth it regresses, and the targets."""
    level: int
    row: int
    col: int
    gt_index: int
    class_id: int
    ltrb: np.ndarray       # target distances in stride units, (left, top, right, bottom)
    gt_box: np.ndarray     # pixel box (x1, y1, x2, y2)
    score: float


@dataclass
class Assignment:
    """
    Ground truth to cell assignment of one image.

    `gt_index_maps[level]` holds the matched ground-truth index per cell,
    -1 for background.
    """
    geometry: List[HeadGeometry]
    gt_index_maps: List[np.ndarray]
    matches: List[Match] = field(default_factory=list)
    unassigned: List[int] = field(default_factory=list)

    def matches_at(self, level: int) -> List[Match]:
        return [m for m in self.matches if m.level == level]

    def cells_of(self, gt_index: int) -> List[Tuple[int, int, int]]:
        return [(m.level, m.row, m.col) for m in self.matches if m.gt_index == gt_index]

    @property
    def num_positive(self) -> int:
        return len(self.matches)
