import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from utils.errors import ConfigError

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_RATIOS = (0.70, 0.15, 0.15)


def split_targets(n_images: int, ratios: Sequence[float]) -> List[int]:
    """
    Largest-remainder split sizes; equal remainders favour the earlier split.

    Examples: 1500 -> [1050, 225, 225], 10 -> [7, 2, 1].
    """
    quotas = [n_images * r for r in ratios]
    targets = [int(math.floor(q + 1e-9)) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda j: (-(quotas[j] - targets[j]), j))
    for j in order[:n_images - sum(targets)]:
        targets[j] += 1
    return targets


def make_splits(n_images: int, rng: np.random.Generator, ratios: Sequence[float] = DEFAULT_RATIOS,
                strata: Optional[Sequence[int]] = None) -> Dict[str, List[int]]:
    """
    Partition image indices into train / val / test, stratified by difficulty.

    Images are visited in (stratum, random key) order and each goes to the
    split lagging furthest behind its proportional share; a full split takes
    no more images.

    Args:
        n_images: Number of images
        rng: Random stream for the in-stratum order
        ratios: Split ratios summing to 1
        strata: Difficulty bucket of each image (default: one bucket)

    Returns:
        Sorted index lists per split name
    """
    if len(ratios) != len(SPLIT_NAMES) or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must be {len(SPLIT_NAMES)} non-negative values summing to 1, got {ratios}")
    if n_images < 0:
        raise ConfigError(f"n_images must be non-negative, got {n_images}")
    strata = np.zeros(n_images, dtype=np.int64) if strata is None else np.asarray(strata, dtype=np.int64)
    if len(strata) != n_images:
        raise ConfigError(f"got {len(strata)} strata for {n_images} images")

    targets = split_targets(n_images, ratios)
    order = np.lexsort((rng.permutation(n_images), strata))
    assigned = [0] * len(targets)
    splits: Dict[str, List[int]] = {name: [] for name in SPLIT_NAMES}
    for step, image in enumerate(order):
        open_splits = [j for j in range(len(targets)) if assigned[j] < targets[j]]
        lag = [targets[j] * (step + 1) / n_images - assigned[j] for j in open_splits]
        best = open_splits[int(np.argmax(lag))]
        assigned[best] += 1
        splits[SPLIT_NAMES[best]].append(int(image))
    return {name: sorted(indices) for name, indices in splits.items()}
