import json

import pytest

from model.builder import build_model
from synthgen.generator import SceneGenerator
from synthgen.scene_spec import SceneSpec
from trainer.ablation import AblationRow, average_rows, run_ablation, run_once, write_ablation_json
from trainer.config import TrainConfig
from utils.errors import ConfigError, DataError


def test_average_rows():
    runs = [[AblationRow("B0", "baseline", 100, 0.5, 0.25, 0.75, 0.5)],
            [AblationRow("B0", "baseline", 100, 0.7, 0.35, 0.25, 1.0)]]
    (row,) = average_rows(runs)
    assert (row.map50, row.map5095, row.precision, row.recall) == pytest.approx((0.6, 0.3, 0.5, 0.75))
    assert row.repeats == 2


def test_ablation_json(tmp_path):
    path = tmp_path / "ablation" / "rows.json"
    write_ablation_json([AblationRow("B1", "+ greenhouse HSV", 10, 0.5, 0.25, 0.5, 0.5)], str(path))
    (loaded,) = json.loads(path.read_text())
    assert loaded["config"] == "B1" and loaded["params"] == 10


def test_invalid_requests():
    scenes = SceneGenerator(SceneSpec(image_size=64, seed=1)).generate_dataset(2)
    with pytest.raises(DataError):
        run_ablation([], [], scenes, TrainConfig())
    with pytest.raises(ConfigError):
        run_ablation(scenes, [], scenes, TrainConfig(), configs=["B7"])
    with pytest.raises(ConfigError):
        run_ablation(scenes, [], scenes, TrainConfig(), repeats=0)


def test_pruned_row_is_smaller():
    scenes = SceneGenerator(SceneSpec(image_size=64, seed=3)).generate_dataset(4)
    model = build_model(0.125, 2, 64, seed=0)
    seen = []
    rows = run_once(model, scenes, [], scenes, TrainConfig(batch_size=2, epoch_scale=0.003), ["B0", "B5"],
                    on_row=seen.append)
    assert [r.config for r in rows] == ["B0", "B5"]
    assert seen == rows
    assert rows[1].params < rows[0].params
    for row in rows:
        assert 0.0 <= row.map50 <= 1.0 and 0.0 <= row.recall <= 1.0


@pytest.mark.slow
def test_directional_levers():
    generator = SceneGenerator(SceneSpec(image_size=96, seed=21))
    train_set = generator.generate_dataset(600)
    val_set = generator.generate_dataset(100, start=600)
    test_set = generator.generate_dataset(100, start=700)
    base = TrainConfig(batch_size=16, epoch_scale=0.1, eval_every=10, seed=0)
    rows = {r.config: r for r in run_ablation(train_set, val_set, test_set, base, width_multiple=0.125,
                                              repeats=3, configs=["B0", "B1", "B2", "B4"])}
    assert rows["B1"].recall > rows["B0"].recall
    assert rows["B2"].precision > rows["B1"].precision
    assert rows["B2"].recall < rows["B1"].recall
    assert rows["B4"].map5095 >= rows["B2"].map5095
