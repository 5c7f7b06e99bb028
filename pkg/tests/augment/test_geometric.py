import numpy as np
import pytest

from augment.geometric import hflip, letterbox, letterbox_annotations, scale_sample
from augment.utils.imaging import PAD_VALUE
from augment.utils.labels import mask_box
from scenes import assert_labels_valid, disk_sample
from utils.sample import RIPE, UNRIPE, Annotation


def test_flip_twice_restores_labels():
    sample = disk_sample(64, [(RIPE, 20.0, 30.0, 6.0), (UNRIPE, 45.0, 12.0, 5.0)])
    twice = hflip(hflip(sample))
    assert np.array_equal(twice.image, sample.image)
    assert np.array_equal(twice.instance_map, sample.instance_map)
    for a, b in zip(twice.annotations, sample.annotations):
        assert np.allclose(a.box, b.box, atol=1e-12)
        assert np.allclose(a.center, b.center, atol=1e-12) if b.center else a.center is None


def test_flip_mirrors_center_point():
    sample = disk_sample(64, [(RIPE, 20.0, 30.0, 6.0)])
    flipped = hflip(sample).annotations[0]
    assert flipped.center[0] == pytest.approx(1.0 - 20.0 / 64)
    assert flipped.center[1] == sample.annotations[0].center[1]


def test_centered_box_is_flip_invariant():
    sample = disk_sample(64, [(RIPE, 32.0, 32.0, 8.0)])
    assert np.allclose(hflip(sample).annotations[0].box, sample.annotations[0].box, atol=1e-12)


def test_flip_keeps_mask_and_box_consistent():
    sample = hflip(disk_sample(64, [(UNRIPE, 10.0, 40.0, 5.0)]))
    x1, y1, x2, y2 = mask_box(sample.instance_map == 1)
    assert np.allclose(np.array(sample.annotations[0].box) * 64, (x1, y1, x2, y2))


def test_half_area_scale_halves_box_area():
    sample = disk_sample(64, [(RIPE, 32.0, 32.0, 12.0)])
    before = sample.annotations[0].area
    after = scale_sample(sample, 0.5).annotations[0].area
    assert after / before == pytest.approx(0.5, rel=1e-9)


def test_zoom_in_drops_labels_pushed_off_canvas():
    sample = disk_sample(64, [(RIPE, 4.0, 4.0, 3.0), (UNRIPE, 32.0, 32.0, 4.0)])
    zoomed = scale_sample(sample, 4.0)
    assert [a.class_id for a in zoomed.annotations] == [UNRIPE]
    assert set(np.unique(zoomed.instance_map)) <= {0, 1}
    assert_labels_valid(zoomed)


def test_zoom_out_pads_with_gray():
    sample = disk_sample(64, [(RIPE, 32.0, 32.0, 8.0)], background=0.0)
    small = scale_sample(sample, 0.25)
    assert np.allclose(small.image[0, 0], PAD_VALUE)
    assert_labels_valid(small)


def test_scale_centers_stay_inside_boxes(rng):
    sample = disk_sample(64, [(RIPE, 8.0, 9.0, 7.0), (RIPE, 50.0, 52.0, 9.0), (UNRIPE, 30.0, 30.0, 5.0)])
    for s in rng.uniform(0.3, 3.0, size=25):
        assert_labels_valid(scale_sample(sample, float(s)))


def test_letterbox_pads_short_side():
    image = np.ones((48, 64, 3))
    canvas, r, pad = letterbox(image, 64)
    assert r == 1.0 and pad == (0, 8)
    assert canvas.shape == (64, 64, 3)
    assert np.allclose(canvas[:8], PAD_VALUE) and np.allclose(canvas[8:56], 1.0)


def test_letterbox_maps_labels():
    anns = [Annotation(RIPE, (0.0, 0.0, 1.0, 1.0), (0.5, 0.5))]
    canvas, r, pad = letterbox(np.zeros((240, 320, 3)), 64)
    (mapped,) = letterbox_annotations(anns, (240, 320), r, pad, 64)
    assert np.allclose(mapped.box, (0.0, 8 / 64, 1.0, 56 / 64))
    assert np.allclose(mapped.center, (0.5, 0.5))
