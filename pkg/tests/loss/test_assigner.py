import numpy as np
import pytest

from loss.assigner import assign_targets
from utils.errors import DataError
from utils.sample import Annotation

GEOMETRY = [(8, 12, 12), (16, 6, 6), (32, 3, 3)]
SIZE = 96


def ann(x1, y1, x2, y2, class_id=1):
    return Annotation(class_id, (x1 / SIZE, y1 / SIZE, x2 / SIZE, y2 / SIZE))


def test_box_equal_to_one_cell():
    assignment = assign_targets([ann(16, 24, 24, 32)], GEOMETRY, SIZE)
    assert assignment.cells_of(0) == [(0, 3, 2)]
    assert np.count_nonzero(assignment.gt_index_maps[0] >= 0) == 1
    for level in (1, 2):
        assert np.all(assignment.gt_index_maps[level] == -1)
    np.testing.assert_allclose(assignment.matches[0].ltrb, [0.5, 0.5, 0.5, 0.5])


def test_disjoint_boxes_get_disjoint_cells():
    assignment = assign_targets([ann(4, 4, 40, 40), ann(50, 50, 90, 92, 0)], GEOMETRY, SIZE)
    first = set(assignment.cells_of(0))
    second = set(assignment.cells_of(1))
    assert first and second
    assert not first & second


def test_each_cell_matches_at_most_one_box():
    boxes = [ann(10, 10, 60, 60), ann(20, 20, 70, 70), ann(15, 30, 80, 65, 0)]
    assignment = assign_targets(boxes, GEOMETRY, SIZE)
    cells = [(m.level, m.row, m.col) for m in assignment.matches]
    assert len(cells) == len(set(cells))
    for m in assignment.matches:
        assert assignment.gt_index_maps[m.level][m.row, m.col] == m.gt_index


def test_topk_per_scale():
    assignment = assign_targets([ann(0, 0, 96, 96)], GEOMETRY, SIZE, topk=10)
    for level in range(3):
        assert len(assignment.matches_at(level)) <= 10


def test_zero_area_rejected():
    with pytest.raises(DataError):
        assign_targets([ann(10, 10, 10, 30)], GEOMETRY, SIZE)


def test_assigned_centers_inside_boxes(rng):
    for _ in range(1000):
        boxes = []
        for _ in range(rng.integers(1, 5)):
            w, h = rng.uniform(8, 60, size=2)
            x1, y1 = rng.uniform(0, SIZE - w), rng.uniform(0, SIZE - h)
            boxes.append(ann(x1, y1, x1 + w, y1 + h, int(rng.integers(0, 2))))
        assignment = assign_targets(boxes, GEOMETRY, SIZE)
        for m in assignment.matches:
            stride = GEOMETRY[m.level][0]
            cx, cy = (m.col + 0.5) * stride, (m.row + 0.5) * stride
            x1, y1, x2, y2 = m.gt_box
            assert x1 < cx < x2 and y1 < cy < y2
            assert np.all(m.ltrb > 0) and np.all(m.ltrb < 15)
