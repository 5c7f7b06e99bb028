"""
Rasterization of greenhouse scenes: background, foliage clutter, shaded fruit.
"""
import math
from typing import List, Tuple

import numpy as np

from synthgen.layout import Fruit
from synthgen.utils.palette import clutter_hue, hsv_color

LEAVES_PER_UNIT_DENSITY = 10
HIGHLIGHT_OFFSET = 0.35
HIGHLIGHT_SIGMA = 0.2


def background(size: int, rng: np.random.Generator) -> np.ndarray:
    """Dark soil-to-foliage vertical gradient."""
    top = np.asarray(hsv_color(rng.uniform(70.0, 110.0), 0.45, rng.uniform(0.25, 0.40)))
    bottom = np.asarray(hsv_color(rng.uniform(20.0, 45.0), 0.40, rng.uniform(0.15, 0.30)))
    t = np.linspace(0.0, 1.0, size)[:, None, None]
    return np.broadcast_to((1.0 - t) * top + t * bottom, (size, size, 3)).copy()


def draw_leaf(image: np.ndarray, rng: np.random.Generator, green_on_green: bool):
    size = image.shape[0]
    cx, cy = rng.uniform(0.0, size, size=2)
    a, b = rng.uniform(0.08, 0.25) * size, rng.uniform(0.03, 0.08) * size
    theta = rng.uniform(0.0, math.pi)
    ys, xs = np.ogrid[0:size, 0:size]
    u = (xs + 0.5 - cx) * math.cos(theta) + (ys + 0.5 - cy) * math.sin(theta)
    v = -(xs + 0.5 - cx) * math.sin(theta) + (ys + 0.5 - cy) * math.cos(theta)
    mask = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    image[mask] = hsv_color(clutter_hue(rng, green_on_green), rng.uniform(0.4, 0.8), rng.uniform(0.3, 0.6))


def draw_stem(image: np.ndarray, rng: np.random.Generator, green_on_green: bool):
    size = image.shape[0]
    x0, y0, x1, y1 = rng.uniform(0.0, size, size=4)
    width = rng.uniform(0.6, 1.5)
    ys, xs = np.ogrid[0:size, 0:size]
    dx, dy = x1 - x0, y1 - y0
    length2 = max(dx * dx + dy * dy, 1e-9)
    t = np.clip(((xs + 0.5 - x0) * dx + (ys + 0.5 - y0) * dy) / length2, 0.0, 1.0)
    distance = np.hypot(xs + 0.5 - (x0 + t * dx), ys + 0.5 - (y0 + t * dy))
    image[distance <= width] = hsv_color(clutter_hue(rng, green_on_green), 0.6, rng.uniform(0.3, 0.5))


def draw_clutter(image: np.ndarray, density: float, rng: np.random.Generator, green_on_green: bool):
    for _ in range(int(rng.poisson(density * LEAVES_PER_UNIT_DENSITY))):
        draw_leaf(image, rng, green_on_green)
    for _ in range(int(rng.poisson(density * LEAVES_PER_UNIT_DENSITY / 3))):
        draw_stem(image, rng, green_on_green)


def shade_fruit(image: np.ndarray, fruit: Fruit, mask: np.ndarray, rng: np.random.Generator):
    """
    Paint one fruit over `mask` as a lit sphere: Lambertian falloff towards
    the rim plus a Gaussian specular spot up and left of the center.
    """
    size = image.shape[0]
    base = np.asarray(hsv_color(fruit.hue, rng.uniform(0.70, 0.95), rng.uniform(0.75, 0.95)))
    ys, xs = np.ogrid[0:size, 0:size]
    dx, dy = (xs + 0.5 - fruit.cx) / fruit.radius, (ys + 0.5 - fruit.cy) / fruit.radius
    depth = np.sqrt(np.clip(1.0 - dx * dx - dy * dy, 0.0, 1.0))
    shading = (0.55 + 0.45 * depth)[..., None] * base
    spot = np.exp(-((dx + HIGHLIGHT_OFFSET) ** 2 + (dy + HIGHLIGHT_OFFSET) ** 2) / (2 * HIGHLIGHT_SIGMA ** 2))
    lit = shading + 0.5 * spot[..., None]
    image[mask] = lit[mask]


def render(fruits: List[Fruit], masks: List[np.ndarray], size: int, clutter_density: float,
           illumination: Tuple[float, Tuple[float, float, float]], green_on_green: bool, noise_sigma: float,
           rng: np.random.Generator) -> np.ndarray:
    """
    Render a scene.

    Args:
        fruits: Fruits in draw order
        masks: Visible pixels of each fruit
        size: Image extent
        clutter_density: Foliage amount in [0, 1]
        illumination: (brightness, RGB tint)
        green_on_green: Paint foliage in the unripe hue range
        noise_sigma: Gaussian sensor noise
        rng: Random stream

    Returns:
        size×size×3 float image in [0, 1]
    """
    image = background(size, rng)
    draw_clutter(image, clutter_density, rng, green_on_green)
    for fruit, mask in zip(fruits, masks):
        shade_fruit(image, fruit, mask, rng)
    brightness, tint = illumination
    image = image * brightness * np.asarray(tint)
    if noise_sigma > 0:
        image = image + rng.normal(0.0, noise_sigma, size=image.shape)
    return np.clip(image, 0.0, 1.0)
