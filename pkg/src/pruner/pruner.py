"""
Structured channel pruning driven by BatchNorm scale magnitudes.

Channels are ranked globally by |gamma| of the BatchNorm that feeds their
consumers; the lowest fraction leaves the model, each group keeping at least
`MIN_CHANNELS`. Producers lose output rows, consumers lose the matching input
columns, so every layer keeps its external channel count.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from model.builder import forward
from model.complexity import count_params
from model.model_graph import ModelGraph
from nn.utils.block_params import BlockParams
from pruner.utils.channel_group import ChannelGroup, channel_groups, segment_index
from pruner.utils.prune_report import PruneReport
from trainer.config import TrainConfig, finetune_plan
from trainer.monitor import TrainingMonitor
from trainer.trainer import TrainResult, train
from utils.errors import ConfigError, ShapeError
from utils.sample import Sample

logger = logging.getLogger(__name__)

MIN_CHANNELS = 4
FINETUNE_EPOCHS = 30
FINETUNE_LR = 0.0003

Ranking = List[Tuple[str, int, float]]


def _ranked(model: ModelGraph, groups: Sequence[ChannelGroup]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Group ordinal, channel and score of every prunable channel, ascending by score."""
    gids, chans, scores = [], [], []
    for gid, group in enumerate(groups):
        s = group.scores(model[group.layer].params)
        gids.append(np.full(len(s), gid))
        chans.append(np.arange(len(s)))
        scores.append(s)
    if not groups:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    gids, chans, scores = np.concatenate(gids), np.concatenate(chans), np.concatenate(scores)
    # ties fall back to (group, channel) order
    order = np.lexsort((chans, gids, scores))
    return gids[order], chans[order], scores[order]


def rank_channels(model: ModelGraph) -> Ranking:
    """
    Every prunable channel as (group key, channel, |gamma|), ascending.

    Args:
        model: Model to rank

    Returns:
        The global ranking, ties ordered by group then channel index
    """
    groups = channel_groups(model)
    gids, chans, scores = _ranked(model, groups)
    return [(groups[g].key, int(c), float(s)) for g, c, s in zip(gids, chans, scores)]


def _select_outputs(p: BlockParams, unit: str, index: np.ndarray) -> None:
    for name in (f"{unit}.w", f"{unit}.b", f"{unit}.bn.g", f"{unit}.bn.b"):
        if name in p:
            p[name].data = p[name].data[index].copy()
            p[name].grad = None
    if unit in p.bn_states:
        p.bn_states[unit] = p.bn_states[unit].select(index)


def _select_inputs(p: BlockParams, unit: str, index: np.ndarray) -> None:
    w = p[f"{unit}.w"]
    w.data = w.data[:, index].copy()
    w.grad = None


def apply_group(p: BlockParams, group: ChannelGroup, keep: np.ndarray) -> None:
    """Shrink every producer and consumer of `group` to the `keep` channels."""
    for unit, offset in group.rows:
        _select_outputs(p, unit, segment_index(p[f"{unit}.w"].shape[0], keep, group.size, (offset,)))
    for unit, offsets in group.cols:
        _select_inputs(p, unit, segment_index(p[f"{unit}.w"].shape[1], keep, group.size, offsets))


def check_structure(model: ModelGraph) -> None:
    """
    Re-check a (pruned) model: every BatchNorm matches its conv and one
    eval forward on a blank image runs through with the right head extents.

    Raises:
        ShapeError: On the first inconsistency
    """
    for layer in model.layers:
        p = layer.params
        for unit, state in p.bn_states.items():
            c_out = p[f"{unit}.w"].shape[0]
            if not (p[f"{unit}.bn.g"].size == p[f"{unit}.bn.b"].size == state.channels == c_out):
                raise ShapeError("check_structure", f"layer {layer.index} unit {unit}: BatchNorm does not "
                                                    f"match {c_out} conv outputs")
    try:
        heads = forward(model, np.zeros((1, 3, model.input_size, model.input_size)), mode="eval")
    except ShapeError as e:
        raise ShapeError("check_structure", f"forward failed: {e}")
    for logits, dist in zip(heads.cls_logits, heads.box_dist):
        if logits.shape[1] != model.num_classes or dist.shape[1] != 4 * model.reg_max:
            raise ShapeError("check_structure", f"head emits {logits.shape[1]} classes / {dist.shape[1]} bins")


def prune(model: ModelGraph, ratio: float, min_channels: int = MIN_CHANNELS) -> Tuple[ModelGraph, PruneReport]:
    """
    Remove the lowest-|gamma| fraction of prunable channels.

    Args:
        model: Trained model, left untouched
        ratio: Fraction of prunable channels to remove, in [0, 1)
        min_channels: Channels every group keeps at least

    Returns:
        (pruned copy, report)

    Raises:
        ConfigError: If ratio is outside [0, 1)
    """
    if not 0.0 <= ratio < 1.0:
        raise ConfigError(f"prune ratio must be in [0, 1), got {ratio}")
    pruned = model.clone()
    groups = channel_groups(pruned)
    gids, chans, _ = _ranked(pruned, groups)
    total = int(sum(g.size for g in groups))
    target = int(round(ratio * total))

    remaining = [g.size for g in groups]
    removed: Dict[int, List[int]] = {gid: [] for gid in range(len(groups))}
    floored = set()
    count = 0
    for gid, chan in zip(gids, chans):
        if count == target:
            break
        if remaining[gid] <= min_channels:
            floored.add(gid)
            continue
        removed[gid].append(int(chan))
        remaining[gid] -= 1
        count += 1
    if count < target:
        logger.warning("channel floor of %d limits pruning to %d of %d requested channels",
                       min_channels, count, target)

    kept: Dict[str, List[int]] = {}
    for gid, group in enumerate(groups):
        keep = np.setdiff1d(np.arange(group.size), removed[gid])
        kept[group.key] = [int(k) for k in keep]
        if removed[gid]:
            apply_group(pruned[group.layer].params, group, keep)
    check_structure(pruned)

    report = PruneReport(
        kept=kept,
        params_before=count_params(model),
        params_after=count_params(pruned),
        ratio_requested=ratio,
        ratio_achieved=count / total if total else 0.0,
        channels_total=total,
        channels_removed=count,
        floored=sorted(groups[g].key for g in floored),
    )
    logger.info("pruned %d of %d channels (%.3f), params %d -> %d", count, total, report.ratio_achieved,
                report.params_before, report.params_after)
    return pruned, report


def finetune(model: ModelGraph, train_samples: Sequence[Sample], val_samples: Sequence[Sample],
             epochs: int = FINETUNE_EPOCHS, cfg: Optional[TrainConfig] = None,
             monitor: Optional[TrainingMonitor] = None) -> TrainResult:
    """Light-augmentation training of a pruned model at a fixed low initial lr."""
    return train(model, train_samples, val_samples, finetune_plan(epochs, FINETUNE_LR), cfg, monitor)
