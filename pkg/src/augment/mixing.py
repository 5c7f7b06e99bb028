"""
Multi-image augmentations: mosaic, mixup, copy-paste, and random erasing.
"""
import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from augment.utils.labels import mask_box, relabel_instances, remap_annotations
from utils.sample import Annotation, Sample

logger = logging.getLogger(__name__)

PASTE_ATTEMPTS = 20


def mosaic(samples: Sequence[Sample], rng: np.random.Generator) -> Sample:
    """
    Tile four samples around a jittered center.

    Each tile is the full-size source shifted so one of its corners meets the
    center; labels are clipped to the tile they landed in.

    Args:
        samples: Four samples of equal size; the first supplies the image id
        rng: Random stream

    Returns:
        The mosaic sample
    """
    if len(samples) < 4:
        raise ValueError(f"mosaic needs 4 samples, got {len(samples)}")
    size = samples[0].size
    xc = int(rng.integers(size // 4, 3 * size // 4 + 1))
    yc = int(rng.integers(size // 4, 3 * size // 4 + 1))
    canvas = np.empty_like(samples[0].image)
    with_maps = all(s.instance_map is not None for s in samples[:4])
    instance_map = np.zeros((size, size), dtype=np.int32) if with_maps else None
    anns: List[Annotation] = []

    tiles = [
        ((0, 0, xc, yc), (xc - size, yc - size)),
        ((xc, 0, size, yc), (xc, yc - size)),
        ((0, yc, xc, size), (xc - size, yc)),
        ((xc, yc, size, size), (xc, yc)),
    ]
    for sample, ((x1, y1, x2, y2), (dx, dy)) in zip(samples[:4], tiles):
        canvas[y1:y2, x1:x2] = sample.image[y1 - dy:y2 - dy, x1 - dx:x2 - dx]
        tile_anns, kept = remap_annotations(sample.annotations, size, size, 1.0, (dx, dy), (x1, y1, x2, y2))
        if instance_map is not None:
            crop = sample.instance_map[y1 - dy:y2 - dy, x1 - dx:x2 - dx]
            instance_map[y1:y2, x1:x2] = relabel_instances(crop, kept, first_id=len(anns) + 1)
        anns.extend(tile_anns)
    return samples[0].with_image(canvas, anns, instance_map)


def mixup_lambda(rng: np.random.Generator, weight: float = 0.5) -> float:
    """Blend weight of the primary image, Beta-distributed with mean `weight`."""
    return float(rng.beta(32.0, 32.0 * (1.0 - weight) / weight))


def mixup(a: Sample, b: Sample, lam: float) -> Sample:
    """Blend `lam`·a + (1 - lam)·b and take the union of the labels."""
    image = lam * a.image + (1.0 - lam) * b.image if lam < 1.0 else a.image.copy()
    instance_map = None
    if a.instance_map is not None and b.instance_map is not None:
        shifted = relabel_instances(b.instance_map, range(len(b.annotations)), first_id=len(a.annotations) + 1)
        instance_map = np.where(a.instance_map > 0, a.instance_map, shifted).astype(np.int32)
    return a.with_image(image, list(a.annotations) + list(b.annotations), instance_map)


def _occupancy(sample: Sample) -> np.ndarray:
    if sample.instance_map is not None:
        return sample.instance_map > 0
    occupied = np.zeros(sample.image.shape[:2], dtype=bool)
    for ann in sample.annotations:
        x1, y1, x2, y2 = ann.to_pixels(sample.size)
        occupied[int(math.floor(y1)):int(math.ceil(y2)), int(math.floor(x1)):int(math.ceil(x2))] = True
    return occupied


def _donor_mask(donor: Sample, index: int) -> np.ndarray:
    if donor.instance_map is not None:
        return donor.instance_map == index + 1
    # without instance masks the whole box region is transplanted
    mask = np.zeros(donor.image.shape[:2], dtype=bool)
    x1, y1, x2, y2 = donor.annotations[index].to_pixels(donor.size)
    mask[int(math.floor(y1)):int(math.ceil(y2)), int(math.floor(x1)):int(math.ceil(x2))] = True
    return mask


def copy_paste(a: Sample, donor: Sample, rng: np.random.Generator) -> Sample:
    """
    Transplant one donor fruit with its label into free space of `a`.

    The donor instance is placed where it overlaps no existing instance;
    after `PASTE_ATTEMPTS` failed placements `a` is returned unchanged.
    """
    size = a.size
    candidates = [k for k in range(len(donor.annotations)) if _donor_mask(donor, k).any()]
    if not candidates or donor.size != size:
        return a
    index = int(rng.choice(candidates))
    mask = _donor_mask(donor, index)
    x1, y1, x2, y2 = mask_box(mask)
    crop_mask = mask[y1:y2, x1:x2]
    occupied = _occupancy(a)

    for _ in range(PASTE_ATTEMPTS):
        dx = int(rng.integers(-x1, size - x2 + 1))
        dy = int(rng.integers(-y1, size - y2 + 1))
        target = (slice(y1 + dy, y2 + dy), slice(x1 + dx, x2 + dx))
        if np.any(occupied[target] & crop_mask):
            continue
        image = a.image.copy()
        image[target][crop_mask] = donor.image[y1:y2, x1:x2][crop_mask]
        source = donor.annotations[index]
        box = ((x1 + dx) / size, (y1 + dy) / size, (x2 + dx) / size, (y2 + dy) / size)
        center = None
        if source.center is not None:
            center = (min(max(source.center[0] + dx / size, box[0]), box[2]),
                      min(max(source.center[1] + dy / size, box[1]), box[3]))
        pasted = Annotation(source.class_id, box, center)
        instance_map = None
        if a.instance_map is not None:
            instance_map = a.instance_map.copy()
            instance_map[target][crop_mask] = len(a.annotations) + 1
        return a.with_image(image, list(a.annotations) + [pasted], instance_map)
    logger.debug("copy-paste found no free placement for %s", a.image_id)
    return a


def random_erase(a: Sample, rng: np.random.Generator, area: Sequence[float] = (0.02, 0.2),
                 aspect: Sequence[float] = (0.3, 3.3)) -> Sample:
    """Fill one random rectangle with noise; labels are untouched."""
    size = a.size
    target_area = size * size * rng.uniform(area[0], area[1])
    ratio = math.exp(rng.uniform(math.log(aspect[0]), math.log(aspect[1])))
    h = int(min(size, max(1, round(math.sqrt(target_area * ratio)))))
    w = int(min(size, max(1, round(math.sqrt(target_area / ratio)))))
    y = int(rng.integers(0, size - h + 1))
    x = int(rng.integers(0, size - w + 1))
    image = a.image.copy()
    image[y:y + h, x:x + w] = rng.uniform(size=(h, w, image.shape[2]))
    return a.with_image(image, a.annotations, a.instance_map)
