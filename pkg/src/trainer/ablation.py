"""
Cumulative ablation B0..B5 over the training levers.

Each configuration adds one lever to the previous one. All of them start
from the same pretrained weights and share seeds, so differences between
rows come from the levers alone.
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from augment.pipeline import GREENHOUSE_HSV
from evalkit.evaluator import evaluate_model
from model.builder import build_model
from model.complexity import count_params
from model.model_graph import ModelGraph
from pruner.pruner import prune
from trainer.config import (PhaseConfig, TrainConfig, baseline_plan, finetune_plan, make_phase_plan,
                            preset_config, scaled_epochs)
from trainer.trainer import pretrain, train
from utils.errors import ConfigError, DataError
from utils.sample import Sample

logger = logging.getLogger(__name__)

CONFIG_NAMES = ("B0", "B1", "B2", "B3", "B4", "B5")
LABELS = {
    "B0": "baseline",
    "B1": "+ greenhouse HSV",
    "B2": "+ frozen backbone",
    "B3": "+ heavy augmentation",
    "B4": "+ three-phase unfreezing",
    "B5": "+ 30% BN pruning",
}
PRUNE_RATIO = 0.30
FINETUNE_EPOCHS = 30


@dataclass
class AblationRow:
    config: str
    label: str
    params: int
    map50: float
    map5095: float
    precision: float
    recall: float
    repeats: int = 1


def variant_config(name: str, base: TrainConfig) -> TrainConfig:
    """
    Training settings of configuration `name`, levers accumulated from B0.

    Args:
        name: One of B0..B5
        base: Shared settings (epochs, batching, seed)

    Returns:
        The configuration's TrainConfig
    """
    if name not in CONFIG_NAMES:
        raise ConfigError(f"unknown ablation config {name!r}, choose from {CONFIG_NAMES}")
    level = CONFIG_NAMES.index(name)
    aug = preset_config("baseline", base).aug
    if level >= 1:
        aug = aug.with_hsv(GREENHOUSE_HSV)
    if level >= 3:
        aug = replace(aug, mixup_p=base.aug.mixup_p, copypaste_p=base.aug.copypaste_p, erase_p=base.aug.erase_p)
    return replace(base, aug=aug, freeze_backbone=level >= 2)


def variant_plan(name: str, cfg: TrainConfig) -> List[PhaseConfig]:
    if CONFIG_NAMES.index(name) >= 4:
        return make_phase_plan(cfg)
    return baseline_plan(cfg)


def _row(name: str, model: ModelGraph, test: Sequence[Sample], cfg: TrainConfig) -> AblationRow:
    report, _ = evaluate_model(model, test, cfg.batch_size, cfg.eval_conf)
    logger.info("%s %s: mAP@50 %.4f, mAP@50:95 %.4f, P %.4f, R %.4f", name, LABELS[name], report.map50,
                report.map5095, report.precision, report.recall)
    return AblationRow(name, LABELS[name], count_params(model), report.map50, report.map5095,
                       report.precision, report.recall)


def run_once(pretrained: ModelGraph, train_samples: Sequence[Sample], val_samples: Sequence[Sample],
             test_samples: Sequence[Sample], base: TrainConfig, configs: Sequence[str] = CONFIG_NAMES,
             on_row: Optional[Callable[[AblationRow], None]] = None) -> List[AblationRow]:
    """
    One repeat of the ablation from shared pretrained weights.

    B5 prunes and fine-tunes the B4 model, so asking for B5 also trains B4.
    """
    rows: List[AblationRow] = []
    trained: Dict[str, ModelGraph] = {}
    wanted = set(configs)
    if "B5" in wanted:
        wanted.add("B4")
    for name in CONFIG_NAMES[:5]:
        if name not in wanted:
            continue
        cfg = variant_config(name, base)
        model = pretrained.clone()
        train(model, train_samples, val_samples, variant_plan(name, cfg), cfg)
        trained[name] = model
        if name in configs:
            rows.append(_row(name, model, test_samples, cfg))
            if on_row is not None:
                on_row(rows[-1])
    if "B5" in configs:
        cfg = variant_config("B5", base)
        pruned, report = prune(trained["B4"], PRUNE_RATIO)
        logger.info("B5 pruning removed %.1f%% of prunable channels", 100 * report.ratio_achieved)
        train(pruned, train_samples, val_samples,
              finetune_plan(scaled_epochs(FINETUNE_EPOCHS, cfg.epoch_scale)), cfg)
        rows.append(_row("B5", pruned, test_samples, cfg))
        if on_row is not None:
            on_row(rows[-1])
    return rows


def average_rows(runs: Sequence[Sequence[AblationRow]]) -> List[AblationRow]:
    """Mean of each configuration's metrics over repeats."""
    averaged = []
    for rows in zip(*runs):
        first = rows[0]
        averaged.append(AblationRow(
            first.config, first.label, first.params,
            float(np.mean([r.map50 for r in rows])),
            float(np.mean([r.map5095 for r in rows])),
            float(np.mean([r.precision for r in rows])),
            float(np.mean([r.recall for r in rows])),
            repeats=len(rows),
        ))
    return averaged


def run_ablation(train_samples: Sequence[Sample], val_samples: Sequence[Sample], test_samples: Sequence[Sample],
                 base: TrainConfig, width_multiple: float = 0.25, repeats: int = 1,
                 pretrain_images: int = 64, pretrain_epochs: int = 5, configs: Sequence[str] = CONFIG_NAMES,
                 on_row: Optional[Callable[[AblationRow], None]] = None) -> List[AblationRow]:
    """
    Run the ablation `repeats` times with seeds base.seed, base.seed + 1, ...

    Args:
        train_samples: Training split
        val_samples: Validation split
        test_samples: Split the rows are measured on
        base: Shared settings; each repeat replaces only the seed
        width_multiple: Model width
        repeats: Independent repeats, averaged
        pretrain_images: Scenes of the class-agnostic warm-up
        pretrain_epochs: Epochs of the warm-up
        configs: Configurations to report
        on_row: Called with every finished row of every repeat

    Returns:
        One averaged row per configuration, in B0..B5 order
    """
    if not train_samples or not test_samples:
        raise DataError("ablation needs non-empty training and test splits")
    if repeats < 1:
        raise ConfigError(f"repeats must be positive, got {repeats}")
    unknown = [c for c in configs if c not in CONFIG_NAMES]
    if unknown:
        raise ConfigError(f"unknown ablation configs {unknown}")
    configs = [c for c in CONFIG_NAMES if c in configs]
    input_size = train_samples[0].image.shape[0]

    runs = []
    for r in range(repeats):
        seed = base.seed + r
        model = build_model(width_multiple, 2, input_size, seed=seed)
        pretrain(model, pretrain_images, pretrain_epochs, seed)
        logger.info("ablation repeat %d/%d (seed %d)", r + 1, repeats, seed)
        runs.append(run_once(model, train_samples, val_samples, test_samples, replace(base, seed=seed),
                             configs, on_row))
    return average_rows(runs)


def write_ablation_json(rows: Sequence[AblationRow], path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump([asdict(row) for row in rows], f, indent=2)
