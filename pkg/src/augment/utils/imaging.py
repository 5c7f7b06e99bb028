from typing import Tuple

import numpy as np
from PIL import Image

PAD_VALUE = 114.0 / 255.0


def affine_resample(image: np.ndarray, out_size: Tuple[int, int], scale: float, offset: Tuple[float, float],
                    fill: float = PAD_VALUE) -> np.ndarray:
    """
    Resample an H×W×C float image so that output (x, y) = scale·input + offset.

    Args:
        image: H×W×C float image
        out_size: (height, width) of the output
        scale: Isotropic scale factor
        offset: (x, y) translation in output pixels
        fill: Value outside the source

    Returns:
        The resampled float64 image
    """
    height, width = out_size
    coeffs = (1.0 / scale, 0.0, -offset[0] / scale, 0.0, 1.0 / scale, -offset[1] / scale)
    channels = []
    for c in range(image.shape[2]):
        src = Image.fromarray(np.ascontiguousarray(image[:, :, c], dtype=np.float32))
        out = src.transform((width, height), Image.Transform.AFFINE, coeffs,
                            resample=Image.Resampling.BILINEAR, fillcolor=fill)
        channels.append(np.asarray(out, dtype=np.float64))
    return np.clip(np.stack(channels, axis=-1), 0.0, 1.0)


def affine_resample_labels(labels: np.ndarray, out_size: Tuple[int, int], scale: float,
                           offset: Tuple[float, float]) -> np.ndarray:
    """Nearest-neighbour version of `affine_resample` for integer instance maps (fill 0)."""
    height, width = out_size
    coeffs = (1.0 / scale, 0.0, -offset[0] / scale, 0.0, 1.0 / scale, -offset[1] / scale)
    src = Image.fromarray(np.ascontiguousarray(labels, dtype=np.int32))
    out = src.transform((width, height), Image.Transform.AFFINE, coeffs,
                        resample=Image.Resampling.NEAREST, fillcolor=0)
    return np.asarray(out, dtype=np.int32)


def resize(image: np.ndarray, out_size: Tuple[int, int]) -> np.ndarray:
    """Bilinear resize of an H×W×C float image to (height, width)."""
    height, width = out_size
    channels = []
    for c in range(image.shape[2]):
        src = Image.fromarray(np.ascontiguousarray(image[:, :, c], dtype=np.float32))
        channels.append(np.asarray(src.resize((width, height), Image.Resampling.BILINEAR), dtype=np.float64))
    return np.clip(np.stack(channels, axis=-1), 0.0, 1.0)


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)


def from_uint8(image: np.ndarray) -> np.ndarray:
    return np.asarray(image, dtype=np.float64) / 255.0
