import numpy as np
import pytest

from augment.color import hsv_jitter, hsv_to_rgb, rgb_to_hsv


@pytest.mark.parametrize("rgb, hsv", [
    ((1.0, 0.0, 0.0), (0.0, 1.0, 1.0)),
    ((0.0, 1.0, 0.0), (120.0, 1.0, 1.0)),
    ((0.0, 0.0, 1.0), (240.0, 1.0, 1.0)),
    ((0.5, 0.5, 0.5), (0.0, 0.0, 0.5)),
    ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0)),
])
def test_reference_colors(rgb, hsv):
    assert np.allclose(rgb_to_hsv(np.array(rgb)), hsv, atol=1e-12)


def test_round_trip(rng):
    pixels = rng.uniform(size=(10000, 3))
    assert np.max(np.abs(hsv_to_rgb(rgb_to_hsv(pixels)) - pixels)) < 1e-6


def test_hue_range(rng):
    h = rgb_to_hsv(rng.uniform(size=(1000, 3)))[:, 0]
    assert np.all(h >= 0.0) and np.all(h < 360.0)


def test_zero_gains_are_identity(rng):
    image = rng.uniform(size=(8, 8, 3))
    out = hsv_jitter(image, 0.0, 0.0, 0.0, rng)
    assert np.array_equal(out, image)
    assert out is not image


def test_hue_shift_preserves_value(rng):
    image = rng.uniform(size=(16, 16, 3))
    out = hsv_jitter(image, 0.3, 0.0, 0.0, rng)
    assert np.array_equal(out.max(axis=-1), image.max(axis=-1))


def test_greenhouse_hue_bound(rng):
    image = rng.uniform(size=(16, 16, 3))
    before = rgb_to_hsv(image)
    for _ in range(20):
        after = rgb_to_hsv(hsv_jitter(image, 0.042, 0.0, 0.0, rng))
        delta = np.abs((after[..., 0] - before[..., 0] + 180.0) % 360.0 - 180.0)
        chromatic = before[..., 1] > 0.2
        assert np.all(delta[chromatic] <= 15.12 + 1e-6)


def test_output_stays_in_unit_range(rng):
    image = rng.uniform(size=(16, 16, 3))
    out = hsv_jitter(image, 0.5, 1.0, 1.0, rng)
    assert out.min() >= 0.0 and out.max() <= 1.0
