import logging
import math
from dataclasses import dataclass, field
from typing import Collection, Dict

import numpy as np

from tensor.tensor import Tensor

logger = logging.getLogger(__name__)


def cosine_lr(lr0: float, lrf: float, epoch: float, total_epochs: float) -> float:
    """
    Cosine annealing from lr0 at epoch 0 to lrf at `total_epochs`.

    `epoch` may be fractional for per-step schedules.
    """
    if total_epochs <= 0:
        return lr0
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    c = (1.0 + math.cos(math.pi * epoch / total_epochs)) / 2.0
    return lr0 * c + lrf * (1.0 - c)


@dataclass
class OptimState:
    """Momentum buffers (shaped like their parameters), step counter and current lr."""
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    lr: float = 0.0
    skipped: int = 0


def sgd_step(params: Dict[str, Tensor], state: OptimState, lr: float, momentum: float = 0.937,
             weight_decay: float = 0.0005, frozen: Collection[str] = ()) -> bool:
    """
    One SGD update with momentum and L2 weight decay.

        v <- momentum * v + g + weight_decay * p
        p <- p - lr * v

    Frozen parameters and their buffers are left untouched. A missing
    gradient counts as zero.

    Args:
        params: Parameters by name
        state: Optimizer state, updated in place
        lr: Learning rate of this step
        momentum: Momentum factor
        weight_decay: L2 factor
        frozen: Names excluded from the update

    Returns:
        False if some gradient was not finite; nothing is updated then
    """
    active = {name: p for name, p in params.items() if name not in frozen}
    for name, p in active.items():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            state.skipped += 1
            logger.warning("non-finite gradient in %s, step %d skipped", name, state.step)
            return False

    for name, p in active.items():
        grad = p.grad if p.grad is not None else 0.0
        v = state.buffers.get(name)
        if v is None:
            v = np.zeros_like(p.data)
        v = momentum * v + grad + weight_decay * p.data
        state.buffers[name] = v
        p.data = p.data - lr * v
    state.step += 1
    state.lr = lr
    return True
