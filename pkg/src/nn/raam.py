from typing import Tuple

import numpy as np

from nn.utils.block_params import BlockParams
from tensor import ops
from tensor.tensor import Tensor
from utils.errors import ShapeError

REDUCTION = 4


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


def init_raam(p: BlockParams, prefix: str, c: int, rng: np.random.Generator, reduction: int = REDUCTION) -> None:
    hidden = max(c // reduction, 1)
    p.add_linear(_join(prefix, "fc1"), c, hidden, rng)
    p.add_linear(_join(prefix, "fc2"), hidden, c, rng)
    p.add(_join(prefix, "beta"), np.zeros(c))


def raam_param_count(c: int, reduction: int = REDUCTION) -> int:
    hidden = max(c // reduction, 1)
    return (c * hidden + hidden) + (hidden * c + c) + c


def _bottleneck(v: Tensor, p: BlockParams, prefix: str) -> Tensor:
    fc1, fc2 = _join(prefix, "fc1"), _join(prefix, "fc2")
    hidden = ops.silu(ops.linear(v, p[f"{fc1}.w"], p[f"{fc1}.b"]))
    return ops.linear(hidden, p[f"{fc2}.w"], p[f"{fc2}.b"])


def raam_logits(F: Tensor, p: BlockParams, beta: Tensor, prefix: str = "") -> Tensor:
    """
    Pre-sigmoid channel logits FC(GAP(F)) + FC(GMP(F)) + beta, shape (N, C).

    Both pooled vectors share one two-layer bottleneck.
    """
    n, c = F.shape[:2]
    if beta.shape != (c,):
        raise ShapeError("raam", f"beta has shape {beta.shape}, feature map has {c} channels")
    avg = ops.reshape(ops.pool(F, "avg_global"), (n, c))
    peak = ops.reshape(ops.pool(F, "max_global"), (n, c))
    return ops.add(ops.add(_bottleneck(avg, p, prefix), _bottleneck(peak, p, prefix)), beta)


def raam_with_gate(F: Tensor, p: BlockParams, beta: Tensor, prefix: str = "") -> Tuple[Tensor, Tensor]:
    n, c = F.shape[:2]
    gate = ops.sigmoid(raam_logits(F, p, beta, prefix))
    return ops.mul(F, ops.reshape(gate, (n, c, 1, 1))), gate


def raam(F: Tensor, p: BlockParams, beta: Tensor, prefix: str = "") -> Tensor:
    """
    Ripeness-aware channel gate.

    Args:
        F: Feature map (N, C, H, W)
        p: Parameters holding the shared FC bottleneck
        beta: Learnable per-channel bias (C,)
        prefix: Name prefix of the FC units

    Returns:
        F scaled per channel by sigmoid(FC(GAP F) + FC(GMP F) + beta)
    """
    return raam_with_gate(F, p, beta, prefix)[0]
