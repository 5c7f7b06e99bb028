"""
Fruit placement with controlled occlusion.

Fruits are disks drawn in list order, later ones on top. A layout is
accepted only if every fruit keeps at least `MIN_VISIBLE` of its disk and
its center stays inside the tight box of its visible pixels.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from augment.utils.labels import mask_box
from synthgen.scene_spec import SceneSpec
from synthgen.utils.palette import fruit_hue
from utils.sample import RIPE, UNRIPE

logger = logging.getLogger(__name__)

MIN_VISIBLE = 0.40
PLACEMENT_ATTEMPTS = 100
OCCLUDED_CAP = 2


@dataclass(frozen=True)
class Fruit:
    class_id: int
    cx: float
    cy: float
    radius: float
    hue: float


def disk_mask(size: int, cx: float, cy: float, radius: float) -> np.ndarray:
    """Pixels whose centers lie inside the disk."""
    ys, xs = np.ogrid[0:size, 0:size]
    return (xs + 0.5 - cx) ** 2 + (ys + 0.5 - cy) ** 2 <= radius * radius


def disk_pixel_count(cx: float, cy: float, radius: float) -> int:
    """Pixel count of the disk on an unbounded grid."""
    x0, y0 = math.floor(cx - radius) - 1, math.floor(cy - radius) - 1
    span = int(math.ceil(2 * radius)) + 3
    ys, xs = np.ogrid[y0:y0 + span, x0:x0 + span]
    return int(np.count_nonzero((xs + 0.5 - cx) ** 2 + (ys + 0.5 - cy) ** 2 <= radius * radius))


def visible_masks(fruits: List[Fruit], size: int) -> List[np.ndarray]:
    """Visible pixels of each fruit once all later fruits are drawn over it."""
    covered = np.zeros((size, size), dtype=bool)
    masks = []
    for fruit in reversed(fruits):
        disk = disk_mask(size, fruit.cx, fruit.cy, fruit.radius)
        masks.append(disk & ~covered)
        covered |= disk
    return masks[::-1]


def _acceptable(fruits: List[Fruit], masks: List[np.ndarray]) -> bool:
    for fruit, mask in zip(fruits, masks):
        visible = np.count_nonzero(mask)
        if visible < MIN_VISIBLE * disk_pixel_count(fruit.cx, fruit.cy, fruit.radius):
            return False
        x1, y1, x2, y2 = mask_box(mask)
        if not (x1 <= fruit.cx <= x2 and y1 <= fruit.cy <= y2):
            return False
    return True


def draw_classes(spec: SceneSpec, rng: np.random.Generator) -> List[int]:
    """Class of every fruit the scene should hold, in placement order."""
    if spec.single_class:
        return [UNRIPE] * max(1, int(rng.poisson(spec.mean_instances)))
    if spec.n_ripe is not None:
        n_ripe = int(rng.integers(spec.n_ripe[0], spec.n_ripe[1] + 1))
        n_unripe = int(rng.integers(spec.n_unripe[0], spec.n_unripe[1] + 1))
        classes = [RIPE] * n_ripe + [UNRIPE] * n_unripe
        return [classes[i] for i in rng.permutation(len(classes))]
    count = max(1, int(rng.poisson(spec.mean_instances)))
    return [RIPE if u < spec.ripe_share else UNRIPE for u in rng.uniform(size=count)]


def _propose(spec: SceneSpec, class_id: int, placed: List[Fruit],
             rng: np.random.Generator) -> Tuple[Fruit, bool]:
    """Draw a candidate fruit; the flag tells whether it was aimed at an existing one."""
    size = spec.image_size
    radius = float(rng.uniform(*spec.radius_range))
    hue = fruit_hue(class_id, rng, any_hue=spec.single_class)
    if placed and rng.uniform() < spec.occlusion_p:
        anchor = placed[int(rng.integers(len(placed)))]
        distance = rng.uniform(0.5, 1.0) * (anchor.radius + radius)
        angle = rng.uniform(0.0, 2.0 * math.pi)
        cx, cy = anchor.cx + distance * math.cos(angle), anchor.cy + distance * math.sin(angle)
        return Fruit(class_id, float(cx), float(cy), radius, hue), True
    cx, cy = rng.uniform(0.0, size, size=2)
    return Fruit(class_id, float(cx), float(cy), radius, hue), False


def _overlaps(candidate: Fruit, placed: List[Fruit]) -> bool:
    return any(math.hypot(candidate.cx - f.cx, candidate.cy - f.cy) < candidate.radius + f.radius + 1.0
               for f in placed)


def place_fruits(spec: SceneSpec, rng: np.random.Generator) -> Tuple[List[Fruit], List[np.ndarray], int]:
    """
    Place the scene's fruits.

    Args:
        spec: Scene parameters
        rng: Random stream

    Returns:
        (fruits, visible masks, number of fruits dropped because no
        acceptable position was found)
    """
    fruits: List[Fruit] = []
    masks: List[np.ndarray] = []
    dropped = 0
    for class_id in draw_classes(spec, rng):
        for _ in range(PLACEMENT_ATTEMPTS):
            candidate, aimed = _propose(spec, class_id, fruits, rng)
            if not aimed and _overlaps(candidate, fruits):
                continue
            trial = fruits + [candidate]
            trial_masks = visible_masks(trial, spec.image_size)
            if not _acceptable(trial, trial_masks):
                continue
            fruits, masks = trial, trial_masks
            break
        else:
            dropped += 1
    if dropped:
        logger.debug("packing infeasible for %d fruit(s) after %d attempts each", dropped, PLACEMENT_ATTEMPTS)
    return fruits, masks, dropped


def occluded_count(fruits: List[Fruit], masks: List[np.ndarray]) -> int:
    """Number of fruits partly hidden by another fruit."""
    size = masks[0].shape[0] if masks else 0
    count = 0
    for fruit, mask in zip(fruits, masks):
        if np.count_nonzero(mask) < np.count_nonzero(disk_mask(size, fruit.cx, fruit.cy, fruit.radius)):
            count += 1
    return count


def difficulty(fruits: List[Fruit], masks: List[np.ndarray]) -> int:
    return min(OCCLUDED_CAP, occluded_count(fruits, masks))
