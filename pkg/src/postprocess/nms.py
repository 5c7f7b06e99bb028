from typing import List

import numpy as np

from postprocess.utils.detection import Detection, boxes_of
from utils.boxes import iou_matrix

IOU_THRESH = 0.45


def nms(dets: List[Detection], iou_thresh: float = IOU_THRESH) -> List[Detection]:
    """
    Per-class greedy non-maximum suppression.

    Detections are visited by descending score, ties to the lower input
    index; a detection is suppressed when its IoU with an already kept box
    of the same class exceeds `iou_thresh`.

    Args:
        dets: Candidate detections
        iou_thresh: Suppression threshold

    Returns:
        Survivors in visiting order
    """
    if not dets:
        return []
    scores = np.array([d.score for d in dets])
    order = np.lexsort((np.arange(len(dets)), -scores))
    classes = np.array([d.class_id for d in dets])
    iou = iou_matrix(boxes_of(dets), boxes_of(dets))

    suppressed = np.zeros(len(dets), dtype=bool)
    keep = []
    for idx in order:
        if suppressed[idx]:
            continue
        keep.append(idx)
        suppressed |= (classes == classes[idx]) & (iou[idx] > iou_thresh)
    return [dets[i] for i in keep]
