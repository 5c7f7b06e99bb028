import pytest

from augment.pipeline import DEFAULT_HSV, GREENHOUSE_HSV
from model.model_graph import BACKBONE_LAYERS
from trainer.ablation import CONFIG_NAMES, variant_config, variant_plan
from trainer.config import (PhaseConfig, TrainConfig, baseline_plan, finetune_plan, make_phase_plan,
                            plan_from_preset, preset_config, scaled_epochs, total_epochs)
from trainer.optimizer import cosine_lr
from utils.errors import ConfigError


class TestPhasePlan:
    def test_defaults(self):
        plan = make_phase_plan(TrainConfig())
        assert [p.epochs for p in plan] == [50, 80, 120]
        assert [p.lr0 for p in plan] == [0.002, 0.001, 0.0003]
        assert [p.aug_strength for p in plan] == ["heavy", "moderate", "light"]
        assert plan[0].frozen_layer_indices == frozenset(BACKBONE_LAYERS)
        assert plan[1].frozen_layer_indices == frozenset(range(5))
        assert plan[2].frozen_layer_indices == frozenset()
        assert total_epochs(plan) == 250

    def test_scaled(self):
        assert [p.epochs for p in make_phase_plan(TrainConfig(), scale=0.1)] == [5, 8, 12]
        assert [p.epochs for p in make_phase_plan(TrainConfig(epoch_scale=0.1))] == [5, 8, 12]

    def test_scaled_epochs_never_zero(self):
        assert scaled_epochs(50, 0.001) == 1

    def test_final_lr(self):
        phase = make_phase_plan(TrainConfig())[0]
        assert phase.final_lr == pytest.approx(0.002 * 0.01)
        assert PhaseConfig("p", frozenset(), 0.01, 3, "light", lrf=1e-4).final_lr == 1e-4

    def test_baseline(self):
        plan = baseline_plan(TrainConfig())
        assert len(plan) == 1
        assert plan[0].epochs == 300
        assert plan[0].lr0 == 0.01 and plan[0].final_lr == 0.0001
        assert plan[0].frozen_layer_indices == frozenset()
        frozen = baseline_plan(TrainConfig(freeze_backbone=True))[0]
        assert frozen.frozen_layer_indices == frozenset(BACKBONE_LAYERS)

    def test_finetune(self):
        plan = finetune_plan(30)
        assert [(p.lr0, p.epochs, p.aug_strength) for p in plan] == [(0.0003, 30, "light")]

    def test_presets(self):
        assert len(plan_from_preset("three_phase", TrainConfig())) == 3
        assert len(plan_from_preset("baseline", TrainConfig())) == 1
        with pytest.raises(ConfigError):
            plan_from_preset("five_phase", TrainConfig())

    def test_baseline_preset_trains_like_b0(self):
        base = TrainConfig()
        cfg = preset_config("baseline", base)
        assert (cfg.aug.mixup_p, cfg.aug.copypaste_p, cfg.aug.erase_p) == (0.0, 0.0, 0.0)
        assert cfg.aug == variant_config("B0", base).aug
        assert plan_from_preset("baseline", cfg) == variant_plan("B0", variant_config("B0", base))
        assert preset_config("three_phase", base) is base
        with pytest.raises(ConfigError):
            preset_config("five_phase", base)

    @pytest.mark.parametrize("kwargs", [
        {"frozen_layer_indices": frozenset({12})},
        {"epochs": 0},
        {"lr0": 0.0},
        {"aug_strength": "extreme"},
    ])
    def test_invalid_phase(self, kwargs):
        values = dict(name="p", frozen_layer_indices=frozenset(), lr0=0.001, epochs=1, aug_strength="light")
        values.update(kwargs)
        with pytest.raises(ConfigError):
            PhaseConfig(**values)

    @pytest.mark.parametrize("kwargs", [
        {"batch_size": 0}, {"momentum": 1.0}, {"lr0": -1.0}, {"epoch_scale": 0.0}, {"eval_every": 0},
    ])
    def test_invalid_train_config(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs).validate()


class TestCosine:
    def test_endpoints_exact(self):
        assert cosine_lr(0.01, 0.0001, 0, 10) == 0.01
        assert cosine_lr(0.01, 0.0001, 10, 10) == pytest.approx(0.0001, abs=1e-18)

    def test_midpoint(self):
        assert cosine_lr(0.01, 0.0001, 5, 10) == pytest.approx(0.00505)

    def test_monotone(self):
        values = [cosine_lr(0.002, 0.00002, e / 4, 50) for e in range(201)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_outside_range(self):
        with pytest.raises(ValueError):
            cosine_lr(0.01, 0.0001, 11, 10)

    def test_empty_schedule(self):
        assert cosine_lr(0.01, 0.0001, 0, 0) == 0.01


class TestAblationConfigs:
    def test_levers_accumulate(self):
        base = TrainConfig()
        b0, b1, b2, b3, b4, b5 = (variant_config(name, base) for name in CONFIG_NAMES)
        assert (b0.aug.hsv_h, b0.aug.hsv_s, b0.aug.hsv_v) == DEFAULT_HSV
        assert b0.aug.mixup_p == b0.aug.copypaste_p == b0.aug.erase_p == 0.0
        assert not b0.freeze_backbone
        assert (b1.aug.hsv_h, b1.aug.hsv_s, b1.aug.hsv_v) == GREENHOUSE_HSV
        assert not b1.freeze_backbone
        assert b2.freeze_backbone and b2.aug.mixup_p == 0.0
        assert (b3.aug.mixup_p, b3.aug.copypaste_p, b3.aug.erase_p) == (0.3, 0.2, 0.1)
        assert b3.aug.hsv_h == GREENHOUSE_HSV[0]
        assert b4.aug == b3.aug and b5.aug == b3.aug

    def test_plans(self):
        base = TrainConfig(epoch_scale=0.1)
        assert len(variant_plan("B2", variant_config("B2", base))) == 1
        assert variant_plan("B2", variant_config("B2", base))[0].frozen_layer_indices == frozenset(BACKBONE_LAYERS)
        assert len(variant_plan("B4", variant_config("B4", base))) == 3

    def test_unknown(self):
        with pytest.raises(ConfigError):
            variant_config("B9", TrainConfig())
