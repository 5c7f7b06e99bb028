"""
Hexcone RGB <-> HSV on float images and the HSV jitter transform.

Hue is in degrees [0, 360); saturation and value in [0, 1].
"""
import numpy as np


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    safe_c = np.where(c > 0, c, 1.0)
    h = np.where(v == r, np.mod((g - b) / safe_c, 6.0),
                 np.where(v == g, (b - r) / safe_c + 2.0, (r - g) / safe_c + 4.0))
    h = np.where(c > 0, np.mod(60.0 * h, 360.0), 0.0)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    hsv = np.asarray(hsv, dtype=np.float64)
    h, s, v = np.mod(hsv[..., 0], 360.0) / 60.0, hsv[..., 1], hsv[..., 2]
    sector = np.floor(h).astype(np.int64) % 6
    f = h - np.floor(h)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    # the largest channel is v itself in every sector
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    r = np.choose(sector, choices_r)
    g = np.choose(sector, choices_g)
    b = np.choose(sector, choices_b)
    return np.stack([r, g, b], axis=-1)


def hsv_jitter(image: np.ndarray, h_gain: float, s_gain: float, v_gain: float,
               rng: np.random.Generator) -> np.ndarray:
    """
    Random hue rotation and saturation / value scaling of a whole image.

    Args:
        image: H×W×3 RGB in [0, 1]
        h_gain: Hue shift bound as a fraction of the full circle
        s_gain: Saturation gain bound, factor drawn from [1 - s_gain, 1 + s_gain]
        v_gain: Value gain bound
        rng: Random stream

    Returns:
        The jittered image
    """
    u = rng.uniform(-1.0, 1.0, size=3)
    if h_gain == 0 and s_gain == 0 and v_gain == 0:
        return image.copy()
    hsv = rgb_to_hsv(image)
    hsv[..., 0] = np.mod(hsv[..., 0] + u[0] * h_gain * 360.0, 360.0)
    hsv[..., 1] = np.clip(hsv[..., 1] * (1.0 + u[1] * s_gain), 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * (1.0 + u[2] * v_gain), 0.0, 1.0)
    return hsv_to_rgb(hsv)
