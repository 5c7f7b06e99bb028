import numpy as np
import pytest

from synthgen.splits import make_splits, split_targets
from utils.errors import ConfigError


def test_reference_split_sizes():
    assert split_targets(1500, (0.7, 0.15, 0.15)) == [1050, 225, 225]
    splits = make_splits(1500, np.random.default_rng(0))
    assert [len(splits[k]) for k in ("train", "val", "test")] == [1050, 225, 225]


def test_small_split_rounding():
    assert split_targets(10, (0.7, 0.15, 0.15)) == [7, 2, 1]


@pytest.mark.parametrize("n", [0, 1, 7, 10, 101])
def test_partition(rng, n):
    splits = make_splits(n, rng)
    indices = [i for part in splits.values() for i in part]
    assert sorted(indices) == list(range(n))
    assert [len(splits[k]) for k in ("train", "val", "test")] == split_targets(n, (0.7, 0.15, 0.15))


def test_strata_are_spread_proportionally(rng):
    strata = np.repeat([0, 1, 2], [600, 500, 400])
    rng.shuffle(strata)
    splits = make_splits(1500, rng, strata=strata)
    for bucket, size in ((0, 600), (1, 500), (2, 400)):
        for name, ratio in (("train", 0.7), ("val", 0.15), ("test", 0.15)):
            count = int(np.sum(strata[splits[name]] == bucket))
            assert abs(count - ratio * size) <= 2


def test_deterministic():
    a = make_splits(50, np.random.default_rng(3), strata=np.arange(50) % 3)
    b = make_splits(50, np.random.default_rng(3), strata=np.arange(50) % 3)
    assert a == b


@pytest.mark.parametrize("ratios", [(0.5, 0.5, 0.5), (0.9, 0.2, -0.1), (0.5, 0.5)])
def test_bad_ratios(rng, ratios):
    with pytest.raises(ConfigError):
        make_splits(10, rng, ratios=ratios)
