"""
Per-command run settings.

Every command has a dataclass of settings with defaults in code. A run
resolves them as defaults < `--config` JSON file < explicit flags; flags
are parsed with `argparse.SUPPRESS` defaults so only the ones actually
given take part in the merge.
"""
import json
import logging
import os
from dataclasses import MISSING, asdict, dataclass, fields
from typing import Any, ClassVar, Dict, Mapping, Optional, Tuple, Type, TypeVar, Union, get_args, get_origin, \
    get_type_hints

from augment.pipeline import DEFAULT_HSV, STRENGTHS, AugConfig
from loss.assigner import TOPK
from loss.losses import LossWeights
from synthgen.scene_spec import MEAN_INSTANCES, RIPE_SHARE, SceneSpec
from synthgen.splits import DEFAULT_RATIOS
from trainer.ablation import CONFIG_NAMES
from trainer.config import PRESETS, TrainConfig
from utils.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

C = TypeVar("C", bound="RunConfig")


@dataclass
class RunConfig:
    """Base of the command settings; subclasses list their path fields."""

    INPUTS: ClassVar[Tuple[str, ...]] = ()       # must exist
    OUTPUT_DIRS: ClassVar[Tuple[str, ...]] = ()  # created
    OUTPUT_FILES: ClassVar[Tuple[str, ...]] = ()  # parent created

    def check(self) -> None:
        """Cross-field checks; raises ConfigError."""

    def prepare_paths(self) -> None:
        """
        Validate inputs and create output locations before any work starts.

        Raises:
            DataError: An input path does not exist
        """
        for name in self.INPUTS:
            path = getattr(self, name)
            if path is not None and not os.path.exists(path):
                raise DataError(f"{name}: no such file or directory: {path}")
        for name in self.OUTPUT_DIRS:
            path = getattr(self, name)
            if path is not None:
                os.makedirs(path, exist_ok=True)
        for name in self.OUTPUT_FILES:
            path = getattr(self, name)
            if path is not None:
                os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SynthConfig(RunConfig):
    out: str
    n_images: int = 1500
    image_size: int = 96
    ratios: Tuple[float, float, float] = DEFAULT_RATIOS
    mean_instances: float = MEAN_INSTANCES
    ripe_share: float = RIPE_SHARE
    occlusion_p: float = 0.3
    clutter_density: float = 0.5
    illumination: Optional[str] = None
    green_on_green: bool = False
    image_format: str = "png"
    seed: int = 0

    OUTPUT_DIRS: ClassVar[Tuple[str, ...]] = ("out",)

    def check(self) -> None:
        if self.n_images < 1:
            raise ConfigError(f"n_images must be positive, got {self.n_images}")
        self.scene_spec()

    def scene_spec(self) -> SceneSpec:
        return SceneSpec(image_size=self.image_size, mean_instances=self.mean_instances,
                         ripe_share=self.ripe_share, occlusion_p=self.occlusion_p,
                         clutter_density=self.clutter_density, illumination=self.illumination,
                         green_on_green=self.green_on_green, seed=self.seed).validate()


@dataclass
class TrainRunConfig(RunConfig):
    data: str
    out: str
    preset: str = "three_phase"
    width_multiple: float = 0.25
    input_size: Optional[int] = None  # default: extent of the dataset images
    reg_max: int = 16
    raam_reduction: int = 4
    neck: str = "lfpn"
    init_weights: Optional[str] = None
    pretrain_images: int = 0
    pretrain_epochs: int = 5
    lr0: float = 0.01
    lrf: float = 0.0001
    momentum: float = 0.937
    weight_decay: float = 0.0005
    batch_size: int = 16
    epochs: int = 300
    epoch_scale: float = 1.0
    freeze_backbone: bool = False
    hsv_h: float = DEFAULT_HSV[0]
    hsv_s: float = DEFAULT_HSV[1]
    hsv_v: float = DEFAULT_HSV[2]
    flip_p: float = 0.5
    mosaic_p: float = 1.0
    mixup_p: float = 0.3
    copypaste_p: float = 0.2
    erase_p: float = 0.1
    loss_cls: float = 0.5
    loss_box: float = 7.5
    loss_dfl: float = 1.5
    topk: int = TOPK
    eval_every: int = 1
    workers: int = 0
    max_incidents: int = 10
    seed: int = 0

    INPUTS: ClassVar[Tuple[str, ...]] = ("data", "init_weights")
    OUTPUT_DIRS: ClassVar[Tuple[str, ...]] = ("out",)

    def check(self) -> None:
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {sorted(PRESETS)}, got {self.preset!r}")
        if self.pretrain_images < 0 or self.pretrain_epochs < 1:
            raise ConfigError("pretrain_images must be non-negative and pretrain_epochs positive")
        self.train_config()

    def train_config(self) -> TrainConfig:
        aug = AugConfig(hsv_h=self.hsv_h, hsv_s=self.hsv_s, hsv_v=self.hsv_v, flip_p=self.flip_p,
                        mosaic_p=self.mosaic_p, mixup_p=self.mixup_p, copypaste_p=self.copypaste_p,
                        erase_p=self.erase_p, seed=self.seed)
        return TrainConfig(lr0=self.lr0, lrf=self.lrf, momentum=self.momentum, weight_decay=self.weight_decay,
                           batch_size=self.batch_size, epochs=self.epochs, epoch_scale=self.epoch_scale,
                           freeze_backbone=self.freeze_backbone, aug=aug,
                           loss_weights=LossWeights(self.loss_cls, self.loss_box, self.loss_dfl), topk=self.topk,
                           eval_every=self.eval_every, workers=self.workers, max_incidents=self.max_incidents,
                           seed=self.seed).validate()


@dataclass
class EvalConfig(RunConfig):
    data: str
    out: str
    weights: Optional[str] = None
    detections: Optional[str] = None
    split: str = "test"
    input_size: Optional[int] = None
    batch_size: int = 8
    conf: float = 0.40
    iou: float = 0.45
    mm_per_px: float = 0.78

    INPUTS: ClassVar[Tuple[str, ...]] = ("data", "weights", "detections")
    OUTPUT_DIRS: ClassVar[Tuple[str, ...]] = ("out",)

    def check(self) -> None:
        if (self.weights is None) == (self.detections is None):
            raise ConfigError("give exactly one of weights or detections")
        if not 0.0 <= self.conf <= 1.0 or not 0.0 < self.iou <= 1.0:
            raise ConfigError(f"conf must be in [0, 1] and iou in (0, 1], got {self.conf} / {self.iou}")
        if self.mm_per_px <= 0 or self.batch_size < 1:
            raise ConfigError("mm_per_px and batch_size must be positive")


@dataclass
class PruneConfig(RunConfig):
    weights: str
    out: str
    ratio: float = 0.30
    min_channels: int = 4
    finetune_epochs: int = 0
    data: Optional[str] = None
    batch_size: int = 16
    workers: int = 0
    seed: int = 0

    INPUTS: ClassVar[Tuple[str, ...]] = ("weights", "data")
    OUTPUT_DIRS: ClassVar[Tuple[str, ...]] = ("out",)

    def check(self) -> None:
        if not 0.0 <= self.ratio < 1.0:
            raise ConfigError(f"ratio must be in [0, 1), got {self.ratio}")
        if self.min_channels < 1 or self.finetune_epochs < 0:
            raise ConfigError("min_channels must be positive and finetune_epochs non-negative")
        if self.finetune_epochs and self.data is None:
            raise ConfigError("fine-tuning needs a dataset (data)")


@dataclass
class InferConfig(RunConfig):
    weights: str
    source: str
    out: str
    conf: float = 0.40
    iou: float = 0.45
    save_images: bool = True

    INPUTS: ClassVar[Tuple[str, ...]] = ("weights", "source")
    OUTPUT_DIRS: ClassVar[Tuple[str, ...]] = ("out",)

    def check(self) -> None:
        if not 0.0 <= self.conf <= 1.0 or not 0.0 < self.iou <= 1.0:
            raise ConfigError(f"conf must be in [0, 1] and iou in (0, 1], got {self.conf} / {self.iou}")


@dataclass
class FlopsConfig(RunConfig):
    weights: Optional[str] = None
    width_multiple: float = 0.25
    input_size: int = 640
    neck: str = "lfpn"
    compare_dense: bool = True
    graph: Optional[str] = None
    report: Optional[str] = None

    INPUTS: ClassVar[Tuple[str, ...]] = ("weights",)
    OUTPUT_FILES: ClassVar[Tuple[str, ...]] = ("graph", "report")


@dataclass
class AugPreviewConfig(RunConfig):
    data: str
    out: str
    split: str = "train"
    n_images: int = 8
    strength: str = "heavy"
    hsv_h: float = DEFAULT_HSV[0]
    hsv_s: float = DEFAULT_HSV[1]
    hsv_v: float = DEFAULT_HSV[2]
    mixup_p: float = 0.3
    copypaste_p: float = 0.2
    erase_p: float = 0.1
    seed: int = 0

    INPUTS: ClassVar[Tuple[str, ...]] = ("data",)
    OUTPUT_DIRS: ClassVar[Tuple[str, ...]] = ("out",)

    def check(self) -> None:
        if self.strength not in STRENGTHS:
            raise ConfigError(f"strength must be one of {STRENGTHS}, got {self.strength!r}")
        if self.n_images < 1:
            raise ConfigError(f"n_images must be positive, got {self.n_images}")
        self.aug_config().validate()

    def aug_config(self) -> AugConfig:
        return AugConfig(hsv_h=self.hsv_h, hsv_s=self.hsv_s, hsv_v=self.hsv_v, mixup_p=self.mixup_p,
                         copypaste_p=self.copypaste_p, erase_p=self.erase_p, seed=self.seed)


@dataclass
class AblateConfig(RunConfig):
    data: str
    out: str
    configs: Tuple[str, ...] = CONFIG_NAMES
    width_multiple: float = 0.25
    repeats: int = 1
    pretrain_images: int = 64
    pretrain_epochs: int = 5
    epoch_scale: float = 1.0
    batch_size: int = 16
    eval_every: int = 1
    workers: int = 0
    seed: int = 0

    INPUTS: ClassVar[Tuple[str, ...]] = ("data",)
    OUTPUT_DIRS: ClassVar[Tuple[str, ...]] = ("out",)

    def check(self) -> None:
        unknown = [c for c in self.configs if c not in CONFIG_NAMES]
        if unknown:
            raise ConfigError(f"unknown ablation configs {unknown}; choose from {CONFIG_NAMES}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be positive, got {self.repeats}")
        self.train_config()

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, epoch_scale=self.epoch_scale, eval_every=self.eval_every,
                           workers=self.workers, seed=self.seed).validate()


COMMAND_CONFIGS: Dict[str, Type[RunConfig]] = {
    "synth": SynthConfig,
    "train": TrainRunConfig,
    "eval": EvalConfig,
    "prune": PruneConfig,
    "infer": InferConfig,
    "flops": FlopsConfig,
    "augpreview": AugPreviewConfig,
    "ablate": AblateConfig,
}


def coerce(name: str, value: Any, hint: Any) -> Any:
    """
    Check a JSON or flag value against a field annotation.

    Lists become tuples; ints are accepted where floats are expected.

    Raises:
        ConfigError: The value does not fit the annotation
    """
    origin = get_origin(hint)
    if origin is Union:
        options = [a for a in get_args(hint) if a is not type(None)]
        if value is None and len(options) < len(get_args(hint)):
            return None
        return coerce(name, value, options[0])
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name}: expected a list, got {value!r}")
        args = get_args(hint)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(coerce(name, v, args[0]) for v in value)
        if len(value) != len(args):
            raise ConfigError(f"{name}: expected {len(args)} values, got {len(value)}")
        return tuple(coerce(name, v, a) for v, a in zip(value, args))
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true or false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
        return value
    return value


def read_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as f:
            values = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(values, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return values


def resolve(cls: Type[C], file_values: Optional[Mapping[str, Any]] = None,
            flag_values: Optional[Mapping[str, Any]] = None) -> C:
    """
    Merge defaults, file values and flag values into a checked config.

    Args:
        cls: Config class of the command
        file_values: Values from the config file
        flag_values: Values of the flags given on the command line

    Returns:
        The config

    Raises:
        ConfigError: Unknown keys, ill-typed values, missing required
            settings or values the command rejects
    """
    hints = get_type_hints(cls)
    known = {f.name: f for f in fields(cls)}
    values: Dict[str, Any] = {}
    for source, given in (("config file", file_values or {}), ("flags", flag_values or {})):
        unknown = sorted(set(given) - set(known))
        if unknown:
            raise ConfigError(f"unknown {cls.__name__} keys in {source}: {', '.join(unknown)}")
        for key, value in given.items():
            values[key] = coerce(key, value, hints[key])
    missing = [name for name, f in known.items()
               if name not in values and f.default is MISSING and f.default_factory is MISSING]
    if missing:
        raise ConfigError(f"missing required settings: {', '.join('--' + m.replace('_', '-') for m in missing)}")
    config = cls(**values)
    config.check()
    logger.debug("resolved %s: %s", cls.__name__, config.to_dict())
    return config


def load_run_config(cls: Type[C], config_path: Optional[str] = None,
                    flag_values: Optional[Mapping[str, Any]] = None) -> C:
    """`resolve` with the file values read from `config_path` when given."""
    file_values = read_config_file(config_path) if config_path else None
    return resolve(cls, file_values, flag_values)


def write_run_config(config: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=2)
