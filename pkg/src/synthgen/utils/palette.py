import colorsys
from typing import Tuple

import numpy as np

from utils.sample import RIPE

RIPE_HUES = (345.0, 375.0)  # wraps through 0
UNRIPE_HUES = (90.0, 140.0)
CLUTTER_HUES = (55.0, 85.0)
CAMOUFLAGE_HUES = UNRIPE_HUES


def fruit_hue(class_id: int, rng: np.random.Generator, any_hue: bool = False) -> float:
    if any_hue:
        return float(rng.uniform(0.0, 360.0))
    low, high = RIPE_HUES if class_id == RIPE else UNRIPE_HUES
    return float(rng.uniform(low, high) % 360.0)


def clutter_hue(rng: np.random.Generator, green_on_green: bool) -> float:
    low, high = CAMOUFLAGE_HUES if green_on_green else CLUTTER_HUES
    return float(rng.uniform(low, high))


def hsv_color(hue: float, saturation: float, value: float) -> Tuple[float, float, float]:
    return colorsys.hsv_to_rgb((hue % 360.0) / 360.0, saturation, value)
