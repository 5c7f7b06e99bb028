import numpy as np
import pytest

from augment.pipeline import GREENHOUSE_HSV, STRENGTHS, AugConfig, augment_sample, build_pipeline
from scenes import assert_labels_valid, disk_sample
from utils.errors import ConfigError
from utils.sample import RIPE, UNRIPE


@pytest.fixture
def pool():
    return [disk_sample(64, [(RIPE, 14.0 + 3 * k, 18.0, 7.0), (UNRIPE, 44.0, 40.0 + 2 * k, 6.0)], f"s{k}")
            for k in range(6)]


def test_strengths_form_strict_subset_chain():
    cfg = AugConfig()
    heavy, moderate, light = (set(build_pipeline(cfg, s).names()) for s in STRENGTHS)
    assert light < moderate < heavy


def test_moderate_caps_mosaic():
    mosaic = build_pipeline(AugConfig(), "moderate").transforms[0]
    assert mosaic.name == "Mosaic" and mosaic.p == 0.5


def test_same_seed_is_bit_identical(pool):
    pipeline = build_pipeline(AugConfig(), "heavy")
    a = augment_sample(pipeline, pool[0], seed=7, index=3, pool=pool)
    b = augment_sample(pipeline, pool[0], seed=7, index=3, pool=pool)
    assert np.array_equal(a.image, b.image)
    assert a.annotations == b.annotations


def test_streams_differ_per_index(pool):
    pipeline = build_pipeline(AugConfig(), "heavy")
    a = augment_sample(pipeline, pool[0], seed=7, index=0, pool=pool)
    b = augment_sample(pipeline, pool[0], seed=7, index=1, pool=pool)
    assert not np.array_equal(a.image, b.image)


@pytest.mark.parametrize("strength", STRENGTHS)
def test_label_geometry_survives_pipeline(pool, strength):
    pipeline = build_pipeline(AugConfig().with_hsv(GREENHOUSE_HSV), strength)
    for index in range(30):
        out = augment_sample(pipeline, pool[index % len(pool)], seed=1, index=index, pool=pool)
        assert out.image.shape == (64, 64, 3)
        assert_labels_valid(out)


def test_without_mixing_zeroes_mixing_probabilities():
    cfg = AugConfig().without_mixing()
    assert (cfg.mixup_p, cfg.copypaste_p, cfg.erase_p) == (0.0, 0.0, 0.0)


@pytest.mark.parametrize("kwargs", [{"hsv_h": 0.6}, {"flip_p": 1.5}, {"mixup_weight": 0.0},
                                    {"scale_range": (0.0, 1.0)}])
def test_invalid_config(kwargs):
    with pytest.raises(ConfigError):
        AugConfig(**kwargs).validate()


def test_unknown_strength():
    with pytest.raises(ConfigError):
        build_pipeline(AugConfig(), "extreme")
