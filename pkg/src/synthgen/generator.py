import logging
from typing import List, Optional, Tuple

import numpy as np

from augment.utils.labels import mask_box
from synthgen.layout import difficulty, place_fruits
from synthgen.render import render
from synthgen.scene_spec import ILLUMINATION, SceneSpec
from utils.rng import derive_rng
from utils.sample import RIPE, Annotation, Sample

logger = logging.getLogger(__name__)


def generate(spec: SceneSpec, rng: np.random.Generator, image_id: str = "scene") -> Sample:
    """
    Generate one scene with exact labels.

    Boxes are tight around each fruit's visible pixels; ripe fruit carry
    their true disk center as the picking point; the instance map marks the
    visible pixels of annotation k with k + 1.

    Args:
        spec: Scene parameters
        rng: Random stream
        image_id: Identifier of the sample

    Returns:
        The sample
    """
    spec.validate()
    size = spec.image_size
    fruits, masks, dropped = place_fruits(spec, rng)
    preset = spec.illumination or sorted(ILLUMINATION)[int(rng.integers(len(ILLUMINATION)))]
    image = render(fruits, masks, size, spec.clutter_density, ILLUMINATION[preset], spec.green_on_green,
                   spec.noise_sigma, rng)

    annotations: List[Annotation] = []
    instance_map = np.zeros((size, size), dtype=np.int32)
    for k, (fruit, mask) in enumerate(zip(fruits, masks)):
        x1, y1, x2, y2 = mask_box(mask)
        center = (fruit.cx / size, fruit.cy / size) if fruit.class_id == RIPE else None
        annotations.append(Annotation(fruit.class_id, (x1 / size, y1 / size, x2 / size, y2 / size), center))
        instance_map[mask] = k + 1
    if dropped:
        logger.info("%s: placed %d fruit, %d dropped as unplaceable", image_id, len(fruits), dropped)
    return Sample(image_id, image, annotations, instance_map, difficulty(fruits, masks))


class SceneGenerator:
    """
    Generates datasets of scenes, one independent stream per image.
    """

    def __init__(self, spec: SceneSpec):
        self.spec = spec.validate()

    def scene(self, index: int) -> Sample:
        return generate(self.spec, derive_rng(self.spec.seed, "scene", index), f"img_{index:05d}")

    def generate_dataset(self, n_images: int, start: int = 0) -> List[Sample]:
        """
        Generate `n_images` scenes.

        Scene i depends only on (spec, i), so any slice of a dataset can be
        regenerated on its own.

        Args:
            n_images: Number of scenes
            start: Index of the first scene

        Returns:
            The samples in index order
        """
        samples = [self.scene(i) for i in range(start, start + n_images)]
        n_fruit = sum(len(s.annotations) for s in samples)
        logger.debug("generated %d scenes with %d fruit", n_images, n_fruit)
        return samples


def class_balance(samples: List[Sample]) -> Tuple[int, int, Optional[float]]:
    """(unripe count, ripe count, ripe share) over a dataset."""
    ripe = sum(1 for s in samples for a in s.annotations if a.class_id == RIPE)
    total = sum(len(s.annotations) for s in samples)
    return total - ripe, ripe, (ripe / total if total else None)
