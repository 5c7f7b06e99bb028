import numpy as np

from evalkit.matching import match
from evalkit.metrics import precision_recall
from evalkit.utils.ground_truth import GroundTruth
from postprocess.utils.detection import Detection
from utils.boxes import box_iou


def grid_truths(n, class_id=1):
    return [GroundTruth(class_id, (20.0 * k, 0.0, 20.0 * k + 10.0, 10.0)) for k in range(n)]


def test_eight_true_two_false_positives():
    gts = grid_truths(8)
    dets = [Detection(1, 0.9 - 0.01 * k, g.box) for k, g in enumerate(gts)]
    dets += [Detection(1, 0.5, (500.0, 500.0, 510.0, 510.0)), Detection(1, 0.4, (600.0, 0.0, 610.0, 10.0))]
    result = match(dets, gts, 0.5)
    assert (result.num_tp, result.num_fp, result.num_fn) == (8, 2, 0)
    assert precision_recall(result.num_tp, result.num_fp, result.num_fn)[0] == 0.8


def test_duplicate_detection_is_false_positive():
    gts = grid_truths(1)
    dets = [Detection(1, 0.8, (0.0, 0.0, 10.0, 10.0)), Detection(1, 0.9, (0.0, 0.0, 10.0, 11.0))]
    result = match(dets, gts, 0.5)
    assert result.is_tp.tolist() == [False, True]
    assert result.gt_index.tolist() == [-1, 0]


def test_class_mismatch_is_false_positive():
    result = match([Detection(0, 0.9, (0.0, 0.0, 10.0, 10.0))], grid_truths(1, class_id=1), 0.5)
    assert result.num_tp == 0 and result.num_fn == 1


def test_empty_inputs():
    assert match([], grid_truths(2), 0.5).num_fn == 2
    assert match([Detection(1, 0.5, (0.0, 0.0, 1.0, 1.0))], [], 0.5).num_fp == 1


def brute_force(dets, gts, thresh):
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    taken = set()
    flags = [False] * len(dets)
    for d in order:
        best, best_iou = None, -1.0
        for g in range(len(gts)):
            if g in taken or gts[g].class_id != dets[d].class_id:
                continue
            value = box_iou(dets[d].box, gts[g].box)
            if value > best_iou:
                best, best_iou = g, value
        if best is not None and best_iou >= thresh:
            taken.add(best)
            flags[d] = True
    return flags


def test_matches_brute_force(rng):
    for _ in range(300):
        gts = []
        for _ in range(rng.integers(0, 6)):
            x, y = rng.uniform(0, 60, size=2)
            gts.append(GroundTruth(int(rng.integers(0, 2)), (x, y, x + rng.uniform(5, 30), y + rng.uniform(5, 30))))
        dets = []
        for _ in range(rng.integers(0, 8)):
            x, y = rng.uniform(0, 60, size=2)
            dets.append(Detection(int(rng.integers(0, 2)), round(float(rng.uniform()), 1),
                                  (x, y, x + rng.uniform(5, 30), y + rng.uniform(5, 30))))
        for thresh in (0.1, 0.5):
            assert match(dets, gts, thresh).is_tp.tolist() == brute_force(dets, gts, thresh)
