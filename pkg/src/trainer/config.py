"""
Training recipes: single-phase baseline and three-phase progressive unfreezing.
"""
from dataclasses import asdict, dataclass, field, replace
from typing import FrozenSet, Iterable, List, Optional

from augment.pipeline import STRENGTHS, AugConfig
from loss.assigner import TOPK
from loss.losses import LossWeights
from model.model_graph import BACKBONE_LAYERS
from utils.errors import ConfigError

BASELINE_EPOCHS = 300
LRF_RATIO = 0.01  # per-phase final lr as a fraction of the phase's initial lr


@dataclass(frozen=True)
class PhaseConfig:
    name: str
    frozen_layer_indices: FrozenSet[int]
    lr0: float
    epochs: int
    aug_strength: str
    lrf: Optional[float] = None

    def __post_init__(self):
        if not set(self.frozen_layer_indices) <= set(BACKBONE_LAYERS):
            raise ConfigError(f"phase {self.name}: frozen layers must be backbone indices 0-9, "
                              f"got {sorted(self.frozen_layer_indices)}")
        if self.epochs <= 0:
            raise ConfigError(f"phase {self.name}: epochs must be positive, got {self.epochs}")
        if self.lr0 <= 0:
            raise ConfigError(f"phase {self.name}: lr0 must be positive, got {self.lr0}")
        if self.aug_strength not in STRENGTHS:
            raise ConfigError(f"phase {self.name}: unknown augmentation strength {self.aug_strength!r}")

    @property
    def final_lr(self) -> float:
        return self.lr0 * LRF_RATIO if self.lrf is None else self.lrf


@dataclass
class TrainConfig:
    """Optimizer, batching and recipe settings shared by every phase."""
    lr0: float = 0.01
    lrf: float = 0.0001
    momentum: float = 0.937
    weight_decay: float = 0.0005
    batch_size: int = 16
    epochs: int = BASELINE_EPOCHS
    epoch_scale: float = 1.0
    freeze_backbone: bool = False
    aug: AugConfig = field(default_factory=AugConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    topk: int = TOPK
    eval_every: int = 1
    eval_conf: float = 0.40
    workers: int = 0
    max_incidents: int = 10
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0 or self.lr0 <= 0 or self.lrf < 0:
            raise ConfigError("lr0 must be positive; lrf and weight_decay non-negative")
        if self.epoch_scale <= 0:
            raise ConfigError(f"epoch_scale must be positive, got {self.epoch_scale}")
        if self.eval_every < 1 or self.workers < 0 or self.topk < 1:
            raise ConfigError("eval_every and topk must be positive, workers non-negative")
        self.aug.validate()
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def scaled_epochs(epochs: int, scale: float) -> int:
    return max(1, int(round(epochs * scale)))


def make_phase_plan(base: TrainConfig, scale: Optional[float] = None) -> List[PhaseConfig]:
    """
    Three-phase progressive unfreezing.

    Phase 1 trains neck and head over a frozen backbone with heavy
    augmentation, phase 2 thaws layers 5-9 with moderate augmentation,
    phase 3 trains everything with light augmentation.

    Args:
        base: Shared settings; its epoch_scale applies unless `scale` is given
        scale: Epoch scale factor, e.g. 0.1 for desk runs

    Returns:
        The three phases
    """
    scale = base.epoch_scale if scale is None else scale
    return [
        PhaseConfig("phase1", frozenset(BACKBONE_LAYERS), 0.002, scaled_epochs(50, scale), "heavy"),
        PhaseConfig("phase2", frozenset(range(5)), 0.001, scaled_epochs(80, scale), "moderate"),
        PhaseConfig("phase3", frozenset(), 0.0003, scaled_epochs(120, scale), "light"),
    ]


def baseline_plan(base: TrainConfig) -> List[PhaseConfig]:
    """Single phase at the base lr schedule; the backbone stays frozen when `freeze_backbone` is set."""
    frozen = frozenset(BACKBONE_LAYERS) if base.freeze_backbone else frozenset()
    return [PhaseConfig("single", frozen, base.lr0, scaled_epochs(base.epochs, base.epoch_scale), "heavy",
                        lrf=base.lrf)]


def finetune_plan(epochs: int, lr0: float = 0.0003) -> List[PhaseConfig]:
    return [PhaseConfig("finetune", frozenset(), lr0, epochs, "light")]


PRESETS = {
    "baseline": baseline_plan,
    "three_phase": make_phase_plan,
}


def plan_from_preset(name: str, base: TrainConfig) -> List[PhaseConfig]:
    if name not in PRESETS:
        raise ConfigError(f"unknown training preset {name!r}, choose from {sorted(PRESETS)}")
    return PRESETS[name](base)


def preset_config(name: str, base: TrainConfig) -> TrainConfig:
    """Settings a preset trains with; the baseline recipe runs without MixUp, copy-paste and erasing."""
    if name not in PRESETS:
        raise ConfigError(f"unknown training preset {name!r}, choose from {sorted(PRESETS)}")
    if name == "baseline":
        return replace(base, aug=base.aug.without_mixing())
    return base


def total_epochs(plan: Iterable[PhaseConfig]) -> int:
    return sum(phase.epochs for phase in plan)
