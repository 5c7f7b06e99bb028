import abc
import logging
from typing import Sequence, Tuple

import numpy as np

from augment import geometric, mixing
from augment.color import hsv_jitter
from utils.sample import Sample

logger = logging.getLogger(__name__)


class Transform(abc.ABC):
    """
    Abstract base class for label-consistent sample transforms.

    A transform fires with probability `p`. The trigger draw is always taken
    so that the random stream does not depend on which transforms fired.
    """

    def __init__(self, p: float = 1.0):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability must be in [0, 1], got {p}")
        self.p = p

    @abc.abstractmethod
    def apply(self, sample: Sample, rng: np.random.Generator, pool: Sequence[Sample]) -> Sample:
        """
        Transform one sample.

        Args:
            sample: The sample to transform
            rng: Random stream of this sample
            pool: Other samples multi-image transforms may draw partners from

        Returns:
            The transformed sample
        """

    def __call__(self, sample: Sample, rng: np.random.Generator, pool: Sequence[Sample] = ()) -> Sample:
        if rng.uniform() >= self.p:
            return sample
        return self.apply(sample, rng, pool)

    @property
    def name(self) -> str:
        return self.__class__.__name__

    def __repr__(self) -> str:
        return f"{self.name}(p={self.p})"


def _partners(pool: Sequence[Sample], rng: np.random.Generator, count: int) -> Tuple[Sample, ...]:
    picks = rng.integers(0, len(pool), size=count)
    return tuple(pool[int(i)] for i in picks)


class HsvJitter(Transform):
    def __init__(self, h_gain: float, s_gain: float, v_gain: float, p: float = 1.0):
        super().__init__(p)
        self.gains = (h_gain, s_gain, v_gain)

    def apply(self, sample, rng, pool):
        return sample.with_image(hsv_jitter(sample.image, *self.gains, rng), sample.annotations,
                                 sample.instance_map)


class HorizontalFlip(Transform):
    def apply(self, sample, rng, pool):
        return geometric.hflip(sample)


class RandomScale(Transform):
    def __init__(self, scale_range: Sequence[float], p: float = 1.0):
        super().__init__(p)
        self.scale_range = tuple(scale_range)

    def apply(self, sample, rng, pool):
        return geometric.random_scale(sample, self.scale_range, rng)


class Mosaic(Transform):
    def apply(self, sample, rng, pool):
        if not pool:
            logger.debug("mosaic skipped for %s: empty pool", sample.image_id)
            return sample
        return mixing.mosaic((sample,) + _partners(pool, rng, 3), rng)


class MixUp(Transform):
    def __init__(self, weight: float = 0.5, p: float = 1.0):
        super().__init__(p)
        self.weight = weight

    def apply(self, sample, rng, pool):
        if not pool:
            return sample
        (partner,) = _partners(pool, rng, 1)
        return mixing.mixup(sample, partner, mixing.mixup_lambda(rng, self.weight))


class CopyPaste(Transform):
    def apply(self, sample, rng, pool):
        if not pool:
            return sample
        (donor,) = _partners(pool, rng, 1)
        return mixing.copy_paste(sample, donor, rng)


class RandomErase(Transform):
    def apply(self, sample, rng, pool):
        return mixing.random_erase(sample, rng)
