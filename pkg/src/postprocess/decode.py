from typing import List

import numpy as np

from model.model_graph import HeadOutputs
from postprocess.utils.detection import Detection

CONF_THRESH = 0.40


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def expected_ltrb(box_dist: np.ndarray, reg_max: int) -> np.ndarray:
    """(N, 4·B, H, W) bin logits -> (N, 4, H, W) expected distances in stride units."""
    n, _, h, w = box_dist.shape
    probs = _softmax(box_dist.reshape(n, 4, reg_max, h, w), axis=2)
    return np.einsum("nsbhw,b->nshw", probs, np.arange(reg_max, dtype=np.float64))


def decode(heads: HeadOutputs, conf_thresh: float = CONF_THRESH, clip: bool = True) -> List[List[Detection]]:
    """
    Anchor-free decode of the head maps.

    Every cell yields its best class; cells whose sigmoid score is below
    `conf_thresh` are dropped.

    Args:
        heads: Head maps of a batch
        conf_thresh: Minimum class score
        clip: Clip boxes to the image

    Returns:
        Pre-NMS detections per image
    """
    if not 0.0 < conf_thresh < 1.0:
        raise ValueError(f"conf_thresh must lie in (0, 1), got {conf_thresh}")
    rows0, cols0 = heads.grid_shapes()[0]
    height, width = rows0 * heads.strides[0], cols0 * heads.strides[0]
    per_image: List[List[Detection]] = [[] for _ in range(heads.batch_size)]

    for level, (logits, dist, stride) in enumerate(zip(heads.cls_logits, heads.box_dist, heads.strides)):
        scores = 1.0 / (1.0 + np.exp(-logits.data))
        best = scores.argmax(axis=1)
        best_score = scores.max(axis=1)
        ltrb = expected_ltrb(dist.data, heads.reg_max) * stride
        rows, cols = best.shape[1:]
        cx = (np.arange(cols) + 0.5) * stride
        cy = (np.arange(rows) + 0.5) * stride
        boxes = np.stack([
            cx[None, None, :] - ltrb[:, 0],
            cy[None, :, None] - ltrb[:, 1],
            cx[None, None, :] + ltrb[:, 2],
            cy[None, :, None] + ltrb[:, 3],
        ], axis=-1)
        if clip:
            boxes[..., 0::2] = np.clip(boxes[..., 0::2], 0.0, width)
            boxes[..., 1::2] = np.clip(boxes[..., 1::2], 0.0, height)
        for b, i, j in zip(*np.nonzero(best_score >= conf_thresh)):
            per_image[b].append(Detection(
                class_id=int(best[b, i, j]),
                score=float(best_score[b, i, j]),
                box=tuple(float(v) for v in boxes[b, i, j]),
                level=level,
                cell=(int(i), int(j)),
            ))
    return per_image
