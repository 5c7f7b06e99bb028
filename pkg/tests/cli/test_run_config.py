import json

import pytest

from cli.run_config import (AblateConfig, EvalConfig, FlopsConfig, PruneConfig, SynthConfig, TrainRunConfig,
                            load_run_config, resolve)
from main import parse_args
from utils.errors import ConfigError, DataError


def flags_of(argv):
    parsed = vars(parse_args(argv))
    return {k: v for k, v in parsed.items() if k not in ("verbose", "quiet", "no_live", "command", "config")}


def write_json(path, values):
    path.write_text(json.dumps(values))
    return str(path)


class TestMerge:
    def test_defaults(self):
        cfg = resolve(TrainRunConfig, None, {"data": "d", "out": "o"})
        assert cfg.lr0 == 0.01 and cfg.preset == "three_phase"
        assert cfg.train_config().aug.hsv_h == 0.015

    def test_file_over_defaults_and_flags_over_file(self, tmp_path):
        path = write_json(tmp_path / "cfg.json", {"data": "d", "out": "o", "lr0": 0.02, "batch_size": 8})
        from_file = load_run_config(TrainRunConfig, path)
        assert (from_file.lr0, from_file.batch_size) == (0.02, 8)
        both = load_run_config(TrainRunConfig, path, {"lr0": 0.03})
        assert (both.lr0, both.batch_size) == (0.03, 8)

    def test_file_plus_same_flags_equals_flags(self, tmp_path):
        argv = ["train", "--data", "d", "--out", "o", "--lr0", "0.005", "--epoch-scale", "0.1",
                "--no-freeze-backbone", "--hsv-h", "0.042"]
        flags = flags_of(argv)
        path = write_json(tmp_path / "cfg.json", flags)
        assert load_run_config(TrainRunConfig, path, flags) == load_run_config(TrainRunConfig, None, flags)
        assert load_run_config(TrainRunConfig, path) == load_run_config(TrainRunConfig, None, flags)

    def test_flags_not_given_do_not_reach_the_merge(self):
        flags = flags_of(["eval", "--data", "d", "--out", "o", "--weights", "w"])
        assert flags == {"data": "d", "out": "o", "weights": "w"}

    def test_lists_become_tuples(self, tmp_path):
        path = write_json(tmp_path / "cfg.json", {"out": "o", "ratios": [0.8, 0.1, 0.1]})
        assert load_run_config(SynthConfig, path).ratios == (0.8, 0.1, 0.1)
        flags = flags_of(["ablate", "--data", "d", "--out", "o", "--configs", "B0", "B2"])
        assert resolve(AblateConfig, None, flags).configs == ("B0", "B2")

    def test_int_accepted_for_float(self):
        assert resolve(PruneConfig, {"weights": "w", "out": "o", "ratio": 0}).ratio == 0.0


class TestRejects:
    def test_unknown_key(self, tmp_path):
        path = write_json(tmp_path / "cfg.json", {"data": "d", "out": "o", "learning_rate": 0.1})
        with pytest.raises(ConfigError, match="learning_rate"):
            load_run_config(TrainRunConfig, path)

    def test_key_of_another_command(self):
        with pytest.raises(ConfigError):
            resolve(FlopsConfig, {"ratio": 0.3})

    @pytest.mark.parametrize("values", [
        {"out": "o", "n_images": "ten"},
        {"out": "o", "n_images": 2.5},
        {"out": "o", "green_on_green": 1},
        {"out": "o", "ratios": [0.5, 0.5]},
    ])
    def test_wrong_types(self, values):
        with pytest.raises(ConfigError):
            resolve(SynthConfig, values)

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="--data"):
            resolve(TrainRunConfig, {"out": "o"})

    def test_command_checks(self):
        with pytest.raises(ConfigError):
            resolve(EvalConfig, {"data": "d", "out": "o"})
        with pytest.raises(ConfigError):
            resolve(EvalConfig, {"data": "d", "out": "o", "weights": "w", "detections": "x"})
        with pytest.raises(ConfigError):
            resolve(PruneConfig, {"weights": "w", "out": "o", "ratio": 1.0})
        with pytest.raises(ConfigError):
            resolve(PruneConfig, {"weights": "w", "out": "o", "finetune_epochs": 3})
        with pytest.raises(ConfigError):
            resolve(TrainRunConfig, {"data": "d", "out": "o", "preset": "five_phase"})
        with pytest.raises(ConfigError):
            resolve(TrainRunConfig, {"data": "d", "out": "o", "mixup_p": 1.5})

    def test_bad_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_run_config(SynthConfig, str(path))
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_run_config(SynthConfig, str(path))


class TestPaths:
    def test_missing_input(self, tmp_path):
        cfg = resolve(EvalConfig, {"data": str(tmp_path / "nowhere"), "out": str(tmp_path / "o"), "weights": "w"})
        with pytest.raises(DataError):
            cfg.prepare_paths()

    def test_outputs_created(self, tmp_path):
        cfg = resolve(FlopsConfig, {"graph": str(tmp_path / "a" / "b" / "graph.dot")})
        cfg.prepare_paths()
        assert (tmp_path / "a" / "b").is_dir()
        cfg = resolve(SynthConfig, {"out": str(tmp_path / "data" / "synth")})
        cfg.prepare_paths()
        assert (tmp_path / "data" / "synth").is_dir()
