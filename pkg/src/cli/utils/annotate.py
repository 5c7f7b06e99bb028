from typing import Iterable, Tuple

import numpy as np
from PIL import Image, ImageDraw

from augment.utils.imaging import to_uint8
from utils.sample import RIPE, Annotation

CLASS_COLORS = {0: (40, 220, 40), 1: (255, 60, 60)}
POINT_RADIUS = 2

Box = Tuple[float, float, float, float]


def _draw(image: np.ndarray, items: Iterable[Tuple[int, Box, object, str]]) -> Image.Image:
    canvas = Image.fromarray(to_uint8(image))
    draw = ImageDraw.Draw(canvas)
    for class_id, box, center, text in items:
        color = CLASS_COLORS.get(class_id, (255, 255, 0))
        draw.rectangle([box[0], box[1], box[2] - 1, box[3] - 1], outline=color)
        if text:
            draw.text((box[0] + 1, max(box[1] - 11, 0)), text, fill=color)
        if center is not None:
            cx, cy = center
            draw.ellipse([cx - POINT_RADIUS, cy - POINT_RADIUS, cx + POINT_RADIUS, cy + POINT_RADIUS],
                         outline=(255, 255, 255), fill=color)
    return canvas


def draw_detections(image: np.ndarray, dets) -> Image.Image:
    """Boxes, scores and picking points of detections in pixel coordinates."""
    return _draw(image, ((d.class_id, d.box, d.center, f"{d.score:.2f}") for d in dets))


def draw_annotations(image: np.ndarray, anns: Iterable[Annotation]) -> Image.Image:
    size = image.shape[0]
    return _draw(image, (
        (a.class_id, tuple(a.to_pixels(size)),
         None if a.center is None or a.class_id != RIPE else (a.center[0] * size, a.center[1] * size), "")
        for a in anns))
