"""
Picking-point localization for ripe detections.

The box center is moved onto the peak of the ripe-class score map around
the detection and refined to sub-cell precision by fitting a 1-D Gaussian
(a parabola in log space) through the peak and its two neighbours on each
axis.
"""
import logging
from dataclasses import replace
from typing import List, Sequence, Tuple

import numpy as np

from postprocess.utils.detection import Detection
from utils.sample import RIPE

logger = logging.getLogger(__name__)

FLAT_TOL = 1e-12
DEGENERATE = 1e-12
SHIFT_EPS = 1e-9


def _axis_offset(left: float, mid: float, right: float) -> float:
    ll, lc, lr = np.log(left), np.log(mid), np.log(right)
    denom = ll - 2.0 * lc + lr
    if denom > -DEGENERATE:
        return 0.0
    return float(np.clip(0.5 * (ll - lr) / denom, -0.5, 0.5))


def gaussian_refine(window: np.ndarray) -> Tuple[float, float]:
    """
    Sub-cell peak offset of a 3×3 score window centred on its peak cell.

    Args:
        window: 3×3 scores, row index = y

    Returns:
        (dx, dy) in cell units, each within [-0.5, 0.5]; 0 on an axis
        without curvature
    """
    w = np.asarray(window, dtype=np.float64)
    if w.min() <= 0.0:
        w = w - w.min() + SHIFT_EPS
    dx = _axis_offset(w[1, 0], w[1, 1], w[1, 2])
    dy = _axis_offset(w[0, 1], w[1, 1], w[2, 1])
    return dx, dy


def _cell_span(lo: float, hi: float, stride: int, cells: int) -> Tuple[int, int]:
    first = int(np.clip(np.floor(lo / stride), 0, cells - 1))
    last = int(np.clip(np.ceil(hi / stride) - 1, first, cells - 1))
    return first, last


def _climb(score_map: np.ndarray, i: int, j: int, rows: Tuple[int, int], cols: Tuple[int, int]) -> Tuple[int, int]:
    while True:
        r0, r1 = max(i - 1, rows[0]), min(i + 1, rows[1])
        c0, c1 = max(j - 1, cols[0]), min(j + 1, cols[1])
        patch = score_map[r0:r1 + 1, c0:c1 + 1]
        di, dj = np.unravel_index(np.argmax(patch), patch.shape)
        ni, nj = r0 + int(di), c0 + int(dj)
        if score_map[ni, nj] <= score_map[i, j]:
            return i, j
        i, j = ni, nj


def localize(box: Sequence[float], score_map: np.ndarray, stride: int) -> Tuple[float, float]:
    """
    Picking point of one box on one score map.

    Starts at the cell holding the box center, climbs to the local maximum
    among cells overlapping the box, and refines there. A flat window keeps
    the geometric center. The result is clamped into the box.
    """
    x1, y1, x2, y2 = box
    gx, gy = (x1 + x2) / 2.0, (y1 + y2) / 2.0
    rows_total, cols_total = score_map.shape
    rows = _cell_span(y1, y2, stride, rows_total)
    cols = _cell_span(x1, x2, stride, cols_total)
    i = int(np.clip(np.floor(gy / stride), rows[0], rows[1]))
    j = int(np.clip(np.floor(gx / stride), cols[0], cols[1]))
    i, j = _climb(score_map, i, j, rows, cols)

    window = np.pad(score_map, 1, mode="edge")[i:i + 3, j:j + 3]
    if window.max() - window.min() <= FLAT_TOL:
        return gx, gy
    dx, dy = gaussian_refine(window)
    cx = (j + 0.5 + dx) * stride
    cy = (i + 0.5 + dy) * stride
    return float(np.clip(cx, x1, x2)), float(np.clip(cy, y1, y2))


def route_and_localize(dets: List[Detection], score_maps: Sequence[np.ndarray],
                       strides: Sequence[int]) -> List[Detection]:
    """
    Send ripe detections through picking-point localization.

    Args:
        dets: NMS survivors of one image
        score_maps: Ripe-class sigmoid map (H, W) per head scale
        strides: Stride per head scale

    Returns:
        Detections where ripe ones carry a center and unripe ones none
    """
    routed = []
    for det in dets:
        if det.class_id != RIPE:
            routed.append(replace(det, center=None))
            continue
        level = 0 if det.level is None else det.level
        center = localize(det.box, score_maps[level], strides[level])
        routed.append(replace(det, center=center))
    return routed
