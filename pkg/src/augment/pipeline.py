"""
Augmentation configuration and the phase-strength pipelines built from it.
"""
import logging
from dataclasses import asdict, dataclass
from typing import List, Sequence, Tuple

from augment.transforms import (CopyPaste, HorizontalFlip, HsvJitter, MixUp, Mosaic, RandomErase, RandomScale,
                                Transform)
from utils.errors import ConfigError
from utils.rng import derive_rng
from utils.sample import Sample

logger = logging.getLogger(__name__)

STRENGTHS = ("heavy", "moderate", "light")
MODERATE_MOSAIC_P = 0.5

DEFAULT_HSV = (0.015, 0.7, 0.4)
GREENHOUSE_HSV = (0.042, 0.5, 0.5)


@dataclass
class AugConfig:
    hsv_h: float = DEFAULT_HSV[0]
    hsv_s: float = DEFAULT_HSV[1]
    hsv_v: float = DEFAULT_HSV[2]
    flip_p: float = 0.5
    scale_range: Tuple[float, float] = (0.5, 1.5)
    mosaic_p: float = 1.0
    mixup_p: float = 0.3
    mixup_weight: float = 0.5
    copypaste_p: float = 0.2
    erase_p: float = 0.1
    seed: int = 0

    def validate(self) -> "AugConfig":
        """
        Check gains and probabilities.

        Returns:
            self, for chaining

        Raises:
            ConfigError: on any out-of-range field
        """
        if not 0.0 <= self.hsv_h <= 0.5:
            raise ConfigError(f"hsv_h must be in [0, 0.5], got {self.hsv_h}")
        for field in ("hsv_s", "hsv_v", "flip_p", "mosaic_p", "mixup_p", "copypaste_p", "erase_p"):
            value = getattr(self, field)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{field} must be in [0, 1], got {value}")
        if not 0.0 < self.mixup_weight < 1.0:
            raise ConfigError(f"mixup_weight must be in (0, 1), got {self.mixup_weight}")
        low, high = self.scale_range
        if not 0.0 < low <= high:
            raise ConfigError(f"scale_range must satisfy 0 < low <= high, got {self.scale_range}")
        return self

    def with_hsv(self, gains: Sequence[float]) -> "AugConfig":
        values = asdict(self)
        values.update(hsv_h=gains[0], hsv_s=gains[1], hsv_v=gains[2])
        return AugConfig(**values)

    def without_mixing(self) -> "AugConfig":
        """The default recipe: mosaic, scale, flip and HSV only."""
        values = asdict(self)
        values.update(mixup_p=0.0, copypaste_p=0.0, erase_p=0.0)
        return AugConfig(**values)


class AugPipeline:
    """An ordered list of transforms applied to one sample."""

    def __init__(self, transforms: List[Transform], strength: str = "custom"):
        self.transforms = transforms
        self.strength = strength

    def __call__(self, sample: Sample, rng, pool: Sequence[Sample] = ()) -> Sample:
        for transform in self.transforms:
            sample = transform(sample, rng, pool)
        return sample

    def names(self) -> List[str]:
        return [t.name for t in self.transforms]

    def __repr__(self) -> str:
        return f"AugPipeline({self.strength}: {', '.join(map(repr, self.transforms))})"


def build_pipeline(cfg: AugConfig, strength: str) -> AugPipeline:
    """
    Build the pipeline of a phase strength.

    heavy enables every transform, moderate drops copy-paste and erasing and
    caps mosaic at 0.5, light keeps HSV and flip only.

    Args:
        cfg: Gains and probabilities
        strength: "heavy", "moderate" or "light"

    Returns:
        The pipeline
    """
    if strength not in STRENGTHS:
        raise ConfigError(f"augmentation strength must be one of {STRENGTHS}, got {strength!r}")
    cfg.validate()
    hsv = HsvJitter(cfg.hsv_h, cfg.hsv_s, cfg.hsv_v)
    flip = HorizontalFlip(cfg.flip_p)
    if strength == "light":
        return AugPipeline([hsv, flip], strength)
    mosaic_p = cfg.mosaic_p if strength == "heavy" else min(cfg.mosaic_p, MODERATE_MOSAIC_P)
    transforms = [Mosaic(mosaic_p), RandomScale(cfg.scale_range), MixUp(cfg.mixup_weight, cfg.mixup_p)]
    if strength == "heavy":
        transforms.append(CopyPaste(cfg.copypaste_p))
    transforms += [hsv, flip]
    if strength == "heavy":
        transforms.append(RandomErase(cfg.erase_p))
    return AugPipeline(transforms, strength)


def augment_sample(pipeline: AugPipeline, sample: Sample, seed: int, index: int, epoch: int = 0,
                   pool: Sequence[Sample] = ()) -> Sample:
    """Augment one sample on its own stream derived from (seed, epoch, index)."""
    return pipeline(sample, derive_rng(seed, "augment", epoch, index), pool)
