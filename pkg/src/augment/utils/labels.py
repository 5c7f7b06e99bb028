from typing import List, Optional, Sequence, Tuple

import numpy as np

from utils.sample import Annotation

MIN_VISIBLE = 0.10

Region = Tuple[float, float, float, float]


def remap_annotations(anns: List[Annotation], src_size: int, out_size: int, scale: float,
                      offset: Tuple[float, float], region: Optional[Region] = None,
                      min_visible: float = MIN_VISIBLE) -> Tuple[List[Annotation], List[int]]:
    """
    Move labels through an isotropic scale and translation in pixel space.

    Boxes are clipped to `region` (default: the output canvas); a box keeping
    less than `min_visible` of its mapped area is dropped. Centers follow the
    same mapping and are clamped into their clipped box.

    Args:
        anns: Normalized labels of a `src_size` image
        src_size: Source extent in pixels
        out_size: Output extent in pixels
        scale: Pixel scale factor
        offset: (x, y) translation in output pixels
        region: Pixel region the mapped labels are visible in
        min_visible: Visible area fraction below which a box is dropped

    Returns:
        Normalized labels of the output and the source index of each
    """
    rx1, ry1, rx2, ry2 = region if region is not None else (0.0, 0.0, float(out_size), float(out_size))
    out, kept = [], []
    for index, ann in enumerate(anns):
        box = np.asarray(ann.box, dtype=np.float64) * src_size * scale
        box[0::2] += offset[0]
        box[1::2] += offset[1]
        area = (box[2] - box[0]) * (box[3] - box[1])
        clipped = np.array([max(box[0], rx1), max(box[1], ry1), min(box[2], rx2), min(box[3], ry2)])
        w, h = clipped[2] - clipped[0], clipped[3] - clipped[1]
        if w <= 0 or h <= 0 or area <= 0 or w * h < min_visible * area:
            continue
        center = None
        if ann.center is not None:
            cx = ann.center[0] * src_size * scale + offset[0]
            cy = ann.center[1] * src_size * scale + offset[1]
            center = (float(np.clip(cx, clipped[0], clipped[2])) / out_size,
                      float(np.clip(cy, clipped[1], clipped[3])) / out_size)
        out.append(Annotation(ann.class_id, tuple(float(v) / out_size for v in clipped), center))
        kept.append(index)
    return out, kept


def relabel_instances(instance_map: Optional[np.ndarray], kept: Sequence[int],
                      first_id: int = 1) -> Optional[np.ndarray]:
    """
    Renumber an instance map after annotations were dropped or appended.

    Pixels of annotation `kept[n]` get id `first_id + n`; pixels of dropped
    annotations become background.
    """
    if instance_map is None:
        return None
    lookup = np.zeros(int(instance_map.max()) + 1, dtype=np.int32)
    for n, old in enumerate(kept):
        if old + 1 < len(lookup):
            lookup[old + 1] = first_id + n
    return lookup[instance_map]


def flip_annotation(ann: Annotation) -> Annotation:
    x1, y1, x2, y2 = ann.box
    center = None if ann.center is None else (1.0 - ann.center[0], ann.center[1])
    return Annotation(ann.class_id, (1.0 - x2, y1, 1.0 - x1, y2), center)


def mask_box(mask: np.ndarray) -> Optional[Tuple[int, int, int, int]]:
    """Tight pixel box (x1, y1, x2, y2), exclusive upper bounds, of a boolean mask."""
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return None
    return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1
