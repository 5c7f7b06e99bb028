from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from evalkit.utils.ground_truth import GroundTruth, gt_boxes
from postprocess.utils.detection import Detection, boxes_of
from utils.boxes import iou_matrix


@dataclass
class MatchResult:
    """
    Outcome of matching one image's detections at one IoU threshold.

    Arrays indexed by detection follow the input order of the detections.
    """
    iou_thresh: float
    is_tp: np.ndarray        # bool per detection
    gt_index: np.ndarray     # matched ground truth per detection, -1 for FP
    iou: np.ndarray          # IoU with the matched (or best candidate) ground truth
    gt_matched: np.ndarray   # bool per ground truth

    @property
    def num_tp(self) -> int:
        return int(self.is_tp.sum())

    @property
    def num_fp(self) -> int:
        return int((~self.is_tp).sum())

    @property
    def num_fn(self) -> int:
        return int((~self.gt_matched).sum())


def score_order(dets: Sequence[Detection]) -> np.ndarray:
    """Indices by descending score, ties to the lower index."""
    scores = np.array([d.score for d in dets], dtype=np.float64)
    return np.lexsort((np.arange(len(dets)), -scores))


def match(dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_thresh: float = 0.5,
          class_aware: bool = True) -> MatchResult:
    """
    Greedy matching by descending detection score.

    Each detection takes the unmatched ground truth (of its own class unless
    `class_aware` is off) with the highest IoU; it is a true positive when
    that IoU reaches `iou_thresh`, otherwise a false positive that consumes
    nothing.

    Args:
        dets: Detections of one image
        gts: Ground truths of the same image
        iou_thresh: Minimum IoU for a true positive
        class_aware: Restrict candidates to the detection's class

    Returns:
        The match result
    """
    n_det, n_gt = len(dets), len(gts)
    is_tp = np.zeros(n_det, dtype=bool)
    gt_index = np.full(n_det, -1, dtype=np.int64)
    best_iou = np.zeros(n_det)
    gt_matched = np.zeros(n_gt, dtype=bool)
    if n_det == 0 or n_gt == 0:
        return MatchResult(iou_thresh, is_tp, gt_index, best_iou, gt_matched)

    ious = iou_matrix(boxes_of(list(dets)), gt_boxes(list(gts)))
    gt_classes = np.array([g.class_id for g in gts])
    for d in score_order(dets):
        candidates = ~gt_matched
        if class_aware:
            candidates &= gt_classes == dets[d].class_id
        if not candidates.any():
            continue
        row = np.where(candidates, ious[d], -1.0)
        g = int(np.argmax(row))
        best_iou[d] = row[g]
        if row[g] >= iou_thresh:
            is_tp[d] = True
            gt_index[d] = g
            gt_matched[g] = True
    return MatchResult(iou_thresh, is_tp, gt_index, best_iou, gt_matched)
