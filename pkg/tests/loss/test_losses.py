import math

import numpy as np
import pytest

from gradcheck import max_relative_error, projected
from loss.assigner import assign_targets, head_geometry
from loss.losses import LossWeights, bce, ciou, dfl, dfl_clamps, expected_distances, total_loss
from loss.utils.assignment import Assignment, Match
from model.builder import build_model, forward
from model.model_graph import HeadOutputs
from tensor.tensor import Tensor
from utils.sample import Annotation

B = 16


def empty_heads(size=96, batch=1, value=-40.0):
    cls, dist = [], []
    for stride in (8, 16, 32):
        g = size // stride
        cls.append(Tensor(np.full((batch, 2, g, g), value), requires_grad=True))
        dist.append(Tensor(np.zeros((batch, 4 * B, g, g)), requires_grad=True))
    return HeadOutputs(cls, dist)


class TestBce:
    def test_permutation_invariant(self, rng):
        z = rng.normal(size=40)
        y = (rng.uniform(size=40) > 0.5).astype(float)
        perm = rng.permutation(40)
        assert bce(Tensor(z), y).item() == pytest.approx(bce(Tensor(z[perm]), y[perm]).item(), abs=1e-14)

    def test_matches_formula(self, rng):
        z = rng.normal(scale=3, size=20)
        y = rng.uniform(size=20)
        p = 1 / (1 + np.exp(-z))
        expected = np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p)))
        assert bce(Tensor(z), y).item() == pytest.approx(expected, rel=1e-12)


class TestCiou:
    def test_identical_boxes(self):
        boxes = np.array([[10.0, 20.0, 50.0, 45.0], [0.0, 0.0, 3.0, 9.0]])
        assert np.all(np.abs(ciou(boxes, boxes).data) < 1e-6)

    def test_disjoint_boxes_exceed_one(self):
        loss = ciou(np.array([[0.0, 0.0, 10.0, 10.0]]), np.array([[20.0, 20.0, 30.0, 40.0]])).data
        assert 1.0 < loss[0] < 2.0 + 1.0

    def test_range(self, rng):
        xy = rng.uniform(0, 50, size=(200, 2, 2))
        wh = rng.uniform(1, 40, size=(200, 2, 2))
        pred = np.concatenate([xy[:, 0], xy[:, 0] + wh[:, 0]], axis=1)
        gt = np.concatenate([xy[:, 1], xy[:, 1] + wh[:, 1]], axis=1)
        loss = ciou(pred, gt).data
        assert np.all(loss >= 0) and np.all(loss < 3.0)

    def test_gradients(self, rng):
        gt = np.array([[10.0, 12.0, 40.0, 30.0], [5.0, 5.0, 25.0, 45.0], [0.0, 0.0, 8.0, 8.0]])
        pred = Tensor(gt + np.array([[1.3, -0.7, 2.1, 1.9], [-2.2, 1.1, 0.6, -3.3], [0.4, 0.9, -1.7, 2.6]]),
                      requires_grad=True)
        fn = projected(lambda p: ciou(p, gt))
        assert max_relative_error(fn, [pred]) < 1e-4


class TestDfl:
    def test_saturated_integer_target(self):
        logits = np.zeros((3, B))
        targets = np.array([0.0, 7.0, 15.0])
        for row, t in enumerate(targets):
            logits[row, int(t)] = 60.0
        assert dfl(Tensor(logits), targets).item() < 1e-12

    def test_uniform_logits_give_log_bins(self, rng):
        targets = rng.uniform(0, B - 1, size=10)
        assert dfl(Tensor(np.zeros((10, B))), targets).item() == pytest.approx(math.log(16), abs=1e-12)

    def test_out_of_range_target_clamped_and_counted(self):
        dfl_clamps.reset()
        value = dfl(Tensor(np.zeros((2, B))), np.array([-1.0, 20.0])).item()
        assert dfl_clamps.count == 2
        assert np.isfinite(value)

    def test_gradient_descent_reaches_target(self):
        logits = Tensor(np.zeros((1, B)), requires_grad=True)
        target = np.array([7.3])
        for _ in range(500):
            logits.grad = None
            dfl(logits, target).backward()
            logits.data -= 2.0 * logits.grad
        assert abs(expected_distances(logits).item() - 7.3) < 0.05

    def test_gradients(self, rng):
        logits = Tensor(rng.normal(size=(4, B)), requires_grad=True)
        targets = rng.uniform(0, B - 1, size=4)
        assert max_relative_error(lambda x: dfl(x, targets), [logits]) < 1e-4


class TestTotalLoss:
    def test_no_ground_truth_confident_background(self):
        heads = empty_heads()
        assignment = assign_targets([], head_geometry(heads), 96)
        total, items = total_loss(heads, [assignment])
        assert total.item() < 1e-10
        assert items.box == 0.0 and items.dfl == 0.0 and items.num_matches == 0

    def test_perfect_prediction(self):
        heads = empty_heads()
        row, col, stride = 5, 5, 8
        ltrb = np.array([2.0, 3.0, 2.0, 1.0])
        cx, cy = (col + 0.5) * stride, (row + 0.5) * stride
        box = np.array([cx - 2 * stride, cy - 3 * stride, cx + 2 * stride, cy + 1 * stride])
        for side, dist in enumerate(ltrb):
            heads.box_dist[0].data[0, side * B + int(dist), row, col] = 60.0
        heads.cls_logits[0].data[0, 1, row, col] = 40.0
        maps = [np.full((g, g), -1) for g in (12, 6, 3)]
        maps[0][row, col] = 0
        assignment = Assignment(head_geometry(heads), maps, [Match(0, row, col, 0, 1, ltrb, box, 1.0)])
        total, items = total_loss(heads, [assignment])
        assert items.box < 1e-6
        assert items.dfl < 1e-12
        assert items.cls < 1e-10
        assert total.item() < 1e-5

    def test_weights_scale_terms(self):
        heads = empty_heads(value=0.0)
        gts = [Annotation(1, (0.2, 0.2, 0.6, 0.5))]
        assignment = assign_targets(gts, head_geometry(heads), 96)
        base, items = total_loss(heads, [assignment])
        doubled, _ = total_loss(heads, [assignment], LossWeights(cls=1.0, box=15.0, dfl=3.0))
        assert doubled.item() == pytest.approx(2 * base.item(), rel=1e-12)
        assert base.item() == pytest.approx(0.5 * items.cls + 7.5 * items.box + 1.5 * items.dfl, rel=1e-12)

    def test_full_model_gradient(self):
        # batch statistics over a 1x1 P5 map need a few images to stay well conditioned
        model = build_model(0.125, 2, 64, seed=5)
        rng = np.random.default_rng(6)
        images = rng.uniform(size=(4, 3, 64, 64))
        gts = [[Annotation(1, (0.1, 0.15, 0.7, 0.8))], [Annotation(0, (0.3, 0.2, 0.9, 0.6))],
               [Annotation(1, (0.05, 0.5, 0.45, 0.95)), Annotation(0, (0.55, 0.1, 0.9, 0.4))],
               [Annotation(1, (0.4, 0.4, 0.6, 0.6))]]
        params = model.parameters()
        chosen = [params[name] for name in ("0.conv.w", "9.psa.ffn1.w", "16.fc1.w", "24.cls.pred.w")]

        def objective(*_):
            heads = forward(model, images, mode="train")
            geometry = head_geometry(heads)
            assignments = [assign_targets(g, geometry, 64) for g in gts]
            return total_loss(heads, assignments)[0]

        assert max_relative_error(objective, chosen, max_checks=5) < 1e-3
