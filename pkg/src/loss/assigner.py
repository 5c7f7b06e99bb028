import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from loss.utils.assignment import Assignment, HeadGeometry, Match
from model.model_graph import HeadOutputs
from utils.errors import DataError
from utils.sample import Annotation

logger = logging.getLogger(__name__)

TOPK = 10
PREFERRED_CELLS = 4.0   # objects about four cells across fit a scale best


def head_geometry(heads: HeadOutputs) -> List[HeadGeometry]:
    return [(stride, rows, cols) for stride, (rows, cols) in zip(heads.strides, heads.grid_shapes())]


def assign_targets(gts: Sequence[Annotation], geometry: Sequence[HeadGeometry], image_size: int,
                   reg_max: int = 16, topk: int = TOPK) -> Assignment:
    """
    Center-prior assignment of ground truths to head cells.

    A cell is a candidate for a box when its center lies strictly inside the
    box and every target distance stays below reg_max - 1 strides. Candidates
    are scored by scale fit (log distance of the box size from four strides)
    plus closeness of the cell center to the box center; the top-k per box
    and scale are kept. A cell claimed by several boxes goes to the highest
    score, ties to the lower box index.

    Args:
        gts: Normalized ground truths of one image
        geometry: (stride, rows, cols) per head scale
        image_size: Input extent in pixels
        reg_max: DFL bins per side
        topk: Cells kept per box and scale

    Returns:
        The assignment
    """
    claims: Dict[Tuple[int, int, int], Match] = {}
    for k, gt in enumerate(gts):
        if gt.width <= 0 or gt.height <= 0:
            raise DataError(f"ground truth {k} has zero area: {gt.box}")
        box = np.asarray(gt.box, dtype=np.float64) * image_size
        x1, y1, x2, y2 = box
        w, h = x2 - x1, y2 - y1
        center = np.array([(x1 + x2) / 2, (y1 + y2) / 2])
        half_diag = 0.5 * np.hypot(w, h)

        for level, (stride, rows, cols) in enumerate(geometry):
            cx = (np.arange(cols) + 0.5) * stride
            cy = (np.arange(rows) + 0.5) * stride
            gx, gy = np.meshgrid(cx, cy)
            ltrb = np.stack([gx - x1, gy - y1, x2 - gx, y2 - gy], axis=-1) / stride
            inside = np.all(ltrb > 0, axis=-1) & np.all(ltrb < reg_max - 1, axis=-1)
            if not inside.any():
                continue
            fit = -abs(np.log2(np.sqrt(w * h) / stride) - np.log2(PREFERRED_CELLS))
            closeness = 1.0 - np.hypot(gx - center[0], gy - center[1]) / half_diag
            score = np.where(inside, fit + closeness, -np.inf)
            order = np.argsort(-score, axis=None, kind="stable")[:topk]
            for flat in order:
                if not np.isfinite(score.flat[flat]):
                    break
                row, col = divmod(int(flat), cols)
                key = (level, row, col)
                candidate = Match(level, row, col, k, gt.class_id, ltrb[row, col].copy(), box.copy(),
                                  float(score.flat[flat]))
                current = claims.get(key)
                if current is None or candidate.score > current.score:
                    claims[key] = candidate

    maps = [np.full((rows, cols), -1, dtype=np.int64) for _, rows, cols in geometry]
    matches = sorted(claims.values(), key=lambda m: (m.level, m.row, m.col))
    for m in matches:
        maps[m.level][m.row, m.col] = m.gt_index
    assigned = {m.gt_index for m in matches}
    unassigned = [k for k in range(len(gts)) if k not in assigned]
    if unassigned:
        logger.debug("%d ground truths received no cell", len(unassigned))
    return Assignment(list(geometry), maps, matches, unassigned)
