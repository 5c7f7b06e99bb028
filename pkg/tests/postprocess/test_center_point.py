import numpy as np
import pytest

from postprocess.center_point import gaussian_refine, localize, route_and_localize
from postprocess.utils.detection import Detection

STRIDE = 8
GRID = 12


def sampled_window(mu_x, mu_y, sigma):
    offsets = np.array([-1.0, 0.0, 1.0])
    gx = np.exp(-(offsets - mu_x) ** 2 / (2 * sigma ** 2))
    gy = np.exp(-(offsets - mu_y) ** 2 / (2 * sigma ** 2))
    return np.outer(gy, gx)


def blob_map(tx, ty, sigma_px, peak=0.9):
    centers = (np.arange(GRID) + 0.5) * STRIDE
    gx, gy = np.meshgrid(centers, centers)
    return peak * np.exp(-((gx - tx) ** 2 + (gy - ty) ** 2) / (2 * sigma_px ** 2))


class TestGaussianRefine:
    def test_symmetric_window(self):
        window = np.array([[0.2, 0.4, 0.2], [0.5, 0.9, 0.5], [0.2, 0.4, 0.2]])
        assert gaussian_refine(window) == (0.0, 0.0)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0, 3.0])
    def test_exact_on_sampled_gaussian(self, sigma):
        dx, dy = gaussian_refine(sampled_window(0.3, -0.2, sigma))
        assert dx == pytest.approx(0.3, abs=1e-6)
        assert dy == pytest.approx(-0.2, abs=1e-6)

    def test_flat_axis_gives_zero(self):
        window = np.array([[0.5, 0.5, 0.5], [0.5, 0.5, 0.5], [0.1, 0.2, 0.1]])
        assert gaussian_refine(window)[0] == 0.0

    def test_offsets_clamped(self):
        window = np.array([[0.1, 0.1, 0.1], [0.1, 0.5, 0.49], [0.1, 0.1, 0.1]])
        dx, _ = gaussian_refine(window)
        assert 0.0 < dx <= 0.5

    def test_nonpositive_window_is_shifted(self):
        window = sampled_window(0.2, 0.0, 1.0) - 0.5
        dx, dy = gaussian_refine(window)
        assert np.isfinite(dx) and np.isfinite(dy)
        assert dx > 0


class TestRouting:
    def test_unripe_has_no_center(self):
        dets = [Detection(0, 0.9, (10, 10, 50, 50), level=0, cell=(3, 3))]
        maps = [np.random.default_rng(0).uniform(size=(GRID, GRID))]
        assert route_and_localize(dets, maps, [STRIDE])[0].center is None

    def test_flat_window_keeps_geometric_center(self):
        dets = [Detection(1, 0.9, (10, 10, 50, 50), level=0, cell=(3, 3))]
        routed = route_and_localize(dets, [np.full((GRID, GRID), 0.7)], [STRIDE])
        assert routed[0].center == (30.0, 30.0)

    def test_refined_centers_inside_boxes(self, rng):
        for _ in range(200):
            score_map = rng.uniform(0.01, 1.0, size=(GRID, GRID))
            x1, y1 = rng.uniform(0, 60, size=2)
            box = (x1, y1, x1 + rng.uniform(4, 36), y1 + rng.uniform(4, 36))
            cx, cy = localize(box, score_map, STRIDE)
            assert box[0] <= cx <= box[2] and box[1] <= cy <= box[3]

    def test_occluded_disks(self, rng):
        closer = 0
        for _ in range(100):
            tx, ty = rng.uniform(32, 64, size=2)
            r = rng.uniform(12, 24)
            cut = 2 * r * rng.uniform(0.1, 0.45)
            box = [tx - r, ty - r, tx + r, ty + r]
            side = int(rng.integers(0, 4))
            box[side] += cut if side < 2 else -cut
            cx, cy = localize(tuple(box), blob_map(tx, ty, r / 2), STRIDE)
            midpoint = ((box[0] + box[2]) / 2, (box[1] + box[3]) / 2)
            if np.hypot(cx - tx, cy - ty) < np.hypot(midpoint[0] - tx, midpoint[1] - ty):
                closer += 1
        assert closer >= 90

    def test_subpixel_beats_integer_argmax(self, rng):
        better = 0
        trials = 500
        for _ in range(trials):
            tx, ty = rng.uniform(24, 72, size=2)
            sigma = rng.uniform(8, 24)
            score_map = blob_map(tx, ty, sigma)
            box = (tx - 2 * sigma, ty - 2 * sigma, tx + 2 * sigma, ty + 2 * sigma)
            cx, cy = localize(box, score_map, STRIDE)
            refined = np.hypot(cx - tx, cy - ty)
            i, j = np.unravel_index(np.argmax(score_map), score_map.shape)
            integer = np.hypot((j + 0.5) * STRIDE - tx, (i + 0.5) * STRIDE - ty)
            assert refined < 0.1
            better += refined < integer
        assert better >= 0.99 * trials
