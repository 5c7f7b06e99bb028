import pytest

from postprocess.utils.detection import Detection, format_detection, parse_detection_line, read_detections, \
    write_detections
from utils.errors import DataError


def test_format_ripe_line():
    det = Detection(1, 0.9, (1.0, 2.0, 30.5, 40.25), center=(15.0, 20.0))
    assert format_detection("img_0001", det) == "img_0001 1 0.900000 1.000 2.000 30.500 40.250 15.000 20.000"


def test_parse_unripe_line():
    image_id, det = parse_detection_line("a 0 0.5 1 2 3 4")
    assert image_id == "a"
    assert det == Detection(0, 0.5, (1.0, 2.0, 3.0, 4.0))


@pytest.mark.parametrize("line", ["a 0 0.5 1 2 3", "a x 0.5 1 2 3 4", "a 0 0.5 5 2 3 4"])
def test_malformed_lines(line):
    with pytest.raises(DataError):
        parse_detection_line(line)


def test_file_round_trip(tmp_path):
    dets = {"a": [Detection(1, 0.75, (0.0, 0.0, 8.0, 8.0), (4.0, 4.0))], "b": [Detection(0, 0.5, (1.0, 1.0, 2.0, 3.0))]}
    path = tmp_path / "dets.txt"
    write_detections(str(path), dets)
    assert read_detections(str(path)) == dets


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        read_detections(str(tmp_path / "none.txt"))
