"""
Detection metrics: precision and recall, interpolated average precision,
mAP over IoU thresholds and the normalized confusion matrix.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from evalkit.matching import match
from evalkit.utils.ground_truth import GroundTruth
from postprocess.utils.detection import Detection
from utils.sample import CLASS_NAMES

logger = logging.getLogger(__name__)

IOU_THRESHOLDS = tuple(np.round(np.arange(0.50, 0.951, 0.05), 2))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)

Images = Sequence[Sequence[Detection]]
Truths = Sequence[Sequence[GroundTruth]]


def precision_recall(tp: int, fp: int, fn: int) -> Tuple[float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall


def f1_score(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def pr_curve(scores: np.ndarray, is_tp: np.ndarray, n_gt: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cumulative recall and precision along descending score.

    Args:
        scores: Detection scores
        is_tp: True-positive flag per detection
        n_gt: Number of ground truths

    Returns:
        (recall, precision) arrays, one entry per detection
    """
    order = np.lexsort((np.arange(len(scores)), -np.asarray(scores, dtype=np.float64)))
    tp = np.asarray(is_tp, dtype=bool)[order]
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(~tp)
    recall = tp_cum / max(n_gt, 1)
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1)
    return recall, precision


def precision_envelope(precision: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(precision[::-1])[::-1]


def average_precision(scores: np.ndarray, is_tp: np.ndarray, n_gt: int) -> Optional[float]:
    """
    101-point interpolated AP.

    Returns:
        AP, or None when there is no ground truth
    """
    if n_gt <= 0:
        return None
    if len(scores) == 0:
        return 0.0
    recall, precision = pr_curve(scores, is_tp, n_gt)
    envelope = precision_envelope(precision)
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(sampled.mean())


def class_matches(dets: Images, gts: Truths, class_id: int, iou_thresh: float) -> Tuple[np.ndarray, np.ndarray, int]:
    """Pool scores and TP flags of one class over all images."""
    scores, flags, n_gt = [], [], 0
    for image_dets, image_gts in zip(dets, gts):
        d = [x for x in image_dets if x.class_id == class_id]
        g = [x for x in image_gts if x.class_id == class_id]
        n_gt += len(g)
        result = match(d, g, iou_thresh)
        scores.extend(x.score for x in d)
        flags.extend(result.is_tp.tolist())
    return np.array(scores, dtype=np.float64), np.array(flags, dtype=bool), n_gt


def class_ap(dets: Images, gts: Truths, class_id: int, iou_thresh: float) -> Optional[float]:
    return average_precision(*class_matches(dets, gts, class_id, iou_thresh))


def map_range(dets: Images, gts: Truths, classes: Sequence[int] = (0, 1)) -> Dict[str, object]:
    """
    mAP@50 and mAP@50:95 averaged over the classes present in the ground truth.

    Returns:
        {"map50", "map5095", "ap50": {class: AP}, "ap5095": {class: AP}, "excluded": [classes]}
    """
    ap50: Dict[int, float] = {}
    ap5095: Dict[int, float] = {}
    excluded: List[int] = []
    for c in classes:
        per_thresh = [class_ap(dets, gts, c, t) for t in IOU_THRESHOLDS]
        if per_thresh[0] is None:
            excluded.append(c)
            continue
        ap50[c] = per_thresh[0]
        ap5095[c] = float(np.mean(per_thresh))
    if excluded:
        logger.info("classes without ground truth excluded from mAP: %s",
                    ", ".join(CLASS_NAMES[c] if c < len(CLASS_NAMES) else str(c) for c in excluded))
    return {
        "map50": float(np.mean(list(ap50.values()))) if ap50 else 0.0,
        "map5095": float(np.mean(list(ap5095.values()))) if ap5095 else 0.0,
        "ap50": ap50,
        "ap5095": ap5095,
        "excluded": excluded,
    }


def confusion_matrix(dets: Images, gts: Truths, iou_thresh: float = 0.5, conf_thresh: float = 0.40,
                     num_classes: int = 2) -> Tuple[np.ndarray, np.ndarray]:
    """
    Row-normalized confusion matrix with a background row and column.

    Detections above `conf_thresh` are matched to ground truth regardless of
    class. Rows are true classes followed by background, columns predicted
    classes followed by background. A missed fruit counts as predicted
    background; an unmatched detection adds to the background row, which is
    normalized over all such false positives.

    Returns:
        (normalized, counts), both (C+1)×(C+1)
    """
    bg = num_classes
    counts = np.zeros((num_classes + 1, num_classes + 1), dtype=np.int64)
    for image_dets, image_gts in zip(dets, gts):
        kept = [d for d in image_dets if d.score >= conf_thresh]
        result = match(kept, image_gts, iou_thresh, class_aware=False)
        for d, g in enumerate(result.gt_index):
            if g >= 0:
                counts[image_gts[g].class_id, kept[d].class_id] += 1
            else:
                counts[bg, kept[d].class_id] += 1
        for g, matched in enumerate(result.gt_matched):
            if not matched:
                counts[image_gts[g].class_id, bg] += 1
    sums = counts.sum(axis=1, keepdims=True)
    normalized = np.divide(counts, sums, out=np.zeros(counts.shape), where=sums > 0)
    return normalized, counts


def detection_counts(dets: Images, gts: Truths, class_id: int, iou_thresh: float = 0.5,
                     conf_thresh: float = 0.40) -> Tuple[int, int, int]:
    """TP, FP and FN of one class at a confidence threshold."""
    tp = fp = fn = 0
    for image_dets, image_gts in zip(dets, gts):
        d = [x for x in image_dets if x.class_id == class_id and x.score >= conf_thresh]
        g = [x for x in image_gts if x.class_id == class_id]
        result = match(d, g, iou_thresh)
        tp += result.num_tp
        fp += result.num_fp
        fn += result.num_fn
    return tp, fp, fn
