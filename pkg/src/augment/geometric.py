import math
from typing import Sequence, Tuple

import numpy as np

from augment.utils.imaging import PAD_VALUE, affine_resample, affine_resample_labels, resize
from augment.utils.labels import flip_annotation, relabel_instances, remap_annotations
from utils.sample import Annotation, Sample


def hflip(sample: Sample) -> Sample:
    """Mirror image, instance map and labels about the vertical axis."""
    instance_map = None if sample.instance_map is None else sample.instance_map[:, ::-1].copy()
    return sample.with_image(sample.image[:, ::-1].copy(),
                             [flip_annotation(a) for a in sample.annotations], instance_map)


def scale_sample(sample: Sample, area_factor: float) -> Sample:
    """
    Zoom about the image center so that object areas scale by `area_factor`.

    The canvas size is unchanged: a zoom-out pads with gray, a zoom-in crops.
    """
    size = sample.size
    k = math.sqrt(area_factor)
    shift = size * (1.0 - k) / 2.0
    image = affine_resample(sample.image, (size, size), k, (shift, shift))
    anns, kept = remap_annotations(sample.annotations, size, size, k, (shift, shift))
    instance_map = None
    if sample.instance_map is not None:
        instance_map = relabel_instances(affine_resample_labels(sample.instance_map, (size, size), k, (shift, shift)),
                                         kept)
    return sample.with_image(image, anns, instance_map)


def random_scale(sample: Sample, scale_range: Sequence[float], rng: np.random.Generator) -> Sample:
    return scale_sample(sample, float(rng.uniform(scale_range[0], scale_range[1])))


def letterbox(image: np.ndarray, size: int) -> Tuple[np.ndarray, float, Tuple[int, int]]:
    """
    Aspect-preserving resize into a gray square canvas.

    Args:
        image: H×W×3 float image
        size: Canvas extent

    Returns:
        (canvas, scale, (pad_x, pad_y))
    """
    height, width = image.shape[:2]
    r = size / max(height, width)
    new_w, new_h = max(1, round(width * r)), max(1, round(height * r))
    pad_x, pad_y = (size - new_w) // 2, (size - new_h) // 2
    canvas = np.full((size, size, image.shape[2]), PAD_VALUE)
    canvas[pad_y:pad_y + new_h, pad_x:pad_x + new_w] = resize(image, (new_h, new_w))
    return canvas, r, (pad_x, pad_y)


def letterbox_annotations(anns: Sequence[Annotation], image_shape: Tuple[int, int], r: float,
                          pad: Tuple[int, int], size: int) -> list:
    """Map labels normalized to an H×W image onto its letterboxed canvas."""
    height, width = image_shape
    out = []
    for ann in anns:
        x1, y1, x2, y2 = ann.box
        box = ((x1 * width * r + pad[0]) / size, (y1 * height * r + pad[1]) / size,
               (x2 * width * r + pad[0]) / size, (y2 * height * r + pad[1]) / size)
        center = None
        if ann.center is not None:
            center = ((ann.center[0] * width * r + pad[0]) / size, (ann.center[1] * height * r + pad[1]) / size)
        out.append(Annotation(ann.class_id, box, center))
    return out
