"""
Picking-point accuracy over true-positive ripe matches.
"""
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from evalkit.matching import match
from evalkit.metrics import Images, Truths
from utils.sample import RIPE

MM_PER_PX = 0.78
WITHIN_PX = 5.0


def px_to_mm(err_px, mm_per_px: float = MM_PER_PX):
    """Project a pixel error to millimetres at the working depth."""
    if mm_per_px <= 0:
        raise ValueError(f"mm_per_px must be positive, got {mm_per_px}")
    return np.asarray(err_px, dtype=np.float64) * mm_per_px if np.ndim(err_px) else float(err_px) * mm_per_px


@dataclass
class CenterErrorStats:
    n: int
    rmse_x: float
    rmse_y: float
    rmse_euclidean: float
    mae: float
    mae_x: float
    mae_y: float
    median: float
    pct_within_5px: float
    pct_within_5px_x: float
    pct_within_5px_y: float

    def in_mm(self, mm_per_px: float = MM_PER_PX) -> Dict[str, float]:
        fields = ("rmse_x", "rmse_y", "rmse_euclidean", "mae", "mae_x", "mae_y", "median")
        return {f"{name}_mm": px_to_mm(getattr(self, name), mm_per_px) for name in fields}

    def to_dict(self, mm_per_px: float = MM_PER_PX) -> Dict[str, float]:
        out = asdict(self)
        out.update(self.in_mm(mm_per_px))
        return out


def center_stats(pred: np.ndarray, gt: np.ndarray) -> Optional[CenterErrorStats]:
    """
    Error statistics between predicted and annotated centers.

    Args:
        pred: (n, 2) predicted (x, y) pixels
        gt: (n, 2) annotated (x, y) pixels

    Returns:
        The statistics, or None without pairs
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 2)
    if len(pred) == 0:
        return None
    err = pred - gt
    dx, dy = np.abs(err[:, 0]), np.abs(err[:, 1])
    dist = np.hypot(err[:, 0], err[:, 1])
    return CenterErrorStats(
        n=len(pred),
        rmse_x=float(np.sqrt(np.mean(dx ** 2))),
        rmse_y=float(np.sqrt(np.mean(dy ** 2))),
        rmse_euclidean=float(np.sqrt(np.mean(dx ** 2 + dy ** 2))),
        mae=float(dist.mean()),
        mae_x=float(dx.mean()),
        mae_y=float(dy.mean()),
        median=float(np.median(dist)),
        pct_within_5px=float(100.0 * np.mean(dist <= WITHIN_PX)),
        pct_within_5px_x=float(100.0 * np.mean(dx <= WITHIN_PX)),
        pct_within_5px_y=float(100.0 * np.mean(dy <= WITHIN_PX)),
    )


def center_pairs(dets: Images, gts: Truths, iou_thresh: float = 0.5,
                 conf_thresh: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """Predicted and annotated centers of ripe true positives at `iou_thresh`."""
    pred: List[Tuple[float, float]] = []
    truth: List[Tuple[float, float]] = []
    for image_dets, image_gts in zip(dets, gts):
        d = [x for x in image_dets if x.class_id == RIPE and x.score >= conf_thresh]
        g = [x for x in image_gts if x.class_id == RIPE]
        result = match(d, g, iou_thresh)
        for k, gi in enumerate(result.gt_index):
            if gi < 0 or d[k].center is None or g[gi].center is None:
                continue
            pred.append(d[k].center)
            truth.append(g[gi].center)
    return np.array(pred).reshape(-1, 2), np.array(truth).reshape(-1, 2)


def error_histogram(pred: np.ndarray, gt: np.ndarray, bin_px: float = 1.0) -> List[Tuple[float, float, int]]:
    """Euclidean error counts in bins of `bin_px`."""
    dist = np.hypot(*(np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64)).reshape(-1, 2).T)
    if dist.size == 0:
        return []
    edges = np.arange(0.0, np.floor(dist.max() / bin_px) * bin_px + 2 * bin_px, bin_px)
    counts, _ = np.histogram(dist, bins=edges)
    return [(float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
