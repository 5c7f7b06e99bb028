"""
Training objective: classification BCE, CIoU and DFL box regression.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from loss.utils.assignment import Assignment
from model.model_graph import HeadOutputs
from tensor import ops
from tensor.tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

EPS = 1e-9


@dataclass
class LossWeights:
    cls: float = 0.5
    box: float = 7.5
    dfl: float = 1.5


@dataclass
class LossItems:
    """Unweighted components of one evaluation of the objective."""
    box: float
    cls: float
    dfl: float
    num_matches: int

    def as_dict(self) -> Dict[str, float]:
        return {"box_loss": self.box, "cls_loss": self.cls, "dfl_loss": self.dfl}


class ClampCounter:
    """Counts DFL targets clamped into the representable bin range."""

    def __init__(self):
        self.count = 0

    def reset(self) -> None:
        self.count = 0


dfl_clamps = ClampCounter()


def bce(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy on logits."""
    return ops.mean(ops.bce_with_logits(logits, targets))


def ciou(pred: Union[Tensor, np.ndarray], gt: Union[Tensor, np.ndarray]) -> Tensor:
    """
    Complete-IoU loss per box pair.

    Args:
        pred: (M, 4) predicted (x1, y1, x2, y2)
        gt: (M, 4) target boxes

    Returns:
        (M,) losses, 1 - IoU + center distance penalty + aspect penalty
    """
    pred, gt = as_tensor(pred), as_tensor(gt)
    px1, py1, px2, py2 = (pred[:, i] for i in range(4))
    gx1, gy1, gx2, gy2 = (gt[:, i] for i in range(4))

    pw, ph = px2 - px1, py2 - py1
    gw, gh = gx2 - gx1, gy2 - gy1
    iw = ops.maximum(ops.minimum(px2, gx2) - ops.maximum(px1, gx1), 0.0)
    ih = ops.maximum(ops.minimum(py2, gy2) - ops.maximum(py1, gy1), 0.0)
    inter = iw * ih
    union = pw * ph + gw * gh - inter + EPS
    iou = inter / union

    cw = ops.maximum(px2, gx2) - ops.minimum(px1, gx1)
    ch = ops.maximum(py2, gy2) - ops.minimum(py1, gy1)
    c2 = cw * cw + ch * ch + EPS
    dx = gx1 + gx2 - px1 - px2
    dy = gy1 + gy2 - py1 - py2
    rho2 = (dx * dx + dy * dy) * 0.25

    v = (4.0 / math.pi ** 2) * (ops.atan(gw / (gh + EPS)) - ops.atan(pw / (ph + EPS))) ** 2
    alpha = v / (v - iou + (1.0 + EPS))
    return 1.0 - iou + rho2 / c2 + alpha * v


def dfl(dist_logits: Tensor, target: np.ndarray) -> Tensor:
    """
    Distribution focal loss, averaged over all sides.

    Args:
        dist_logits: (..., B) bin logits
        target: (...) continuous distances in bins, expected in [0, B - 1]

    Returns:
        Scalar loss
    """
    bins = dist_logits.shape[-1]
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    out_of_range = (target < 0) | (target > bins - 1)
    if out_of_range.any():
        dfl_clamps.count += int(out_of_range.sum())
        logger.debug("clamped %d DFL targets into [0, %d]", int(out_of_range.sum()), bins - 1)
        target = np.clip(target, 0.0, bins - 1)

    left = np.floor(target).astype(np.int64)
    left = np.minimum(left, bins - 1)
    right = np.minimum(left + 1, bins - 1)
    w_left = left + 1 - target
    w_right = target - left
    logp = ops.log_softmax(ops.reshape(dist_logits, (-1, bins)), axis=-1)
    rows = np.arange(len(target))
    nll = -(ops.getitem(logp, (rows, left)) * w_left + ops.getitem(logp, (rows, right)) * w_right)
    return ops.mean(nll)


def expected_distances(dist_logits: Tensor) -> Tensor:
    """Expectation decode of (..., B) bin logits."""
    bins = dist_logits.shape[-1]
    return ops.sum(ops.softmax(dist_logits, axis=-1) * np.arange(bins, dtype=np.float64), axis=-1)


def _gather_positives(heads: HeadOutputs, assignments: Sequence[Assignment]):
    dists: List[Tensor] = []
    anchors, strides, targets, gt_boxes = [], [], [], []
    bins = heads.reg_max
    for level, stride in enumerate(heads.strides):
        batch, rows, cols = [], [], []
        for b, assignment in enumerate(assignments):
            for m in assignment.matches_at(level):
                batch.append(b)
                rows.append(m.row)
                cols.append(m.col)
                anchors.append(((m.col + 0.5) * stride, (m.row + 0.5) * stride))
                strides.append(stride)
                targets.append(m.ltrb)
                gt_boxes.append(m.gt_box)
        if batch:
            picked = ops.getitem(heads.box_dist[level],
                                 (np.array(batch), slice(None), np.array(rows), np.array(cols)))
            dists.append(ops.reshape(picked, (len(batch), 4, bins)))
    return (ops.concat(dists, axis=0), np.array(anchors), np.array(strides, dtype=np.float64),
            np.array(targets), np.array(gt_boxes))


def total_loss(heads: HeadOutputs, assignments: Sequence[Assignment],
               weights: LossWeights = None) -> Tuple[Tensor, LossItems]:
    """
    Weighted training objective over a batch.

    The classification term is the summed element BCE over every cell and
    class, divided by max(#matched cells, 1), not the mean over all
    elements. Box and DFL terms average over matched cells and are zero
    without matches.

    Args:
        heads: Head maps of the batch
        assignments: One assignment per image
        weights: Term weights

    Returns:
        Scalar loss tensor and its unweighted components
    """
    weights = weights or LossWeights()
    num_matches = sum(a.num_positive for a in assignments)
    normalizer = float(max(num_matches, 1))

    cls_sum = None
    for level, logits in enumerate(heads.cls_logits):
        target = np.zeros(logits.shape)
        for b, assignment in enumerate(assignments):
            for m in assignment.matches_at(level):
                target[b, m.class_id, m.row, m.col] = 1.0
        term = ops.sum(ops.bce_with_logits(logits, target))
        cls_sum = term if cls_sum is None else cls_sum + term
    cls_loss = cls_sum / normalizer
    total = cls_loss * weights.cls

    box_value = dfl_value = 0.0
    if num_matches:
        dist, anchors, strides, targets, gt_boxes = _gather_positives(heads, assignments)
        ltrb = expected_distances(dist) * strides[:, None]
        pred = ops.concat([ops.sub(anchors, ltrb[:, :2]), ops.add(ltrb[:, 2:], anchors)], axis=1)
        box_loss = ops.mean(ciou(pred, gt_boxes))
        dfl_loss = dfl(dist, targets)
        total = total + box_loss * weights.box + dfl_loss * weights.dfl
        box_value, dfl_value = box_loss.item(), dfl_loss.item()

    return total, LossItems(box_value, cls_loss.item(), dfl_value, num_matches)
