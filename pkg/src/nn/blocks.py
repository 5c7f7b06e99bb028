"""
Composite blocks of the detector: Conv-BN-SiLU, depthwise-separable conv,
C3k2 / DW-C3k2, Ghost fusion, SPPF and the positional self-attention tail.

Each block comes as an `init_*` function writing its tensors into a
`BlockParams` under a name prefix, a forward function reading them back,
and a `*_param_count` closed form of its learnable parameters.
"""
import math
from typing import Optional, Tuple

import numpy as np

from nn.utils.block_params import BlockParams, conv_param_count
from tensor import ops
from tensor.tensor import Tensor
from utils.errors import ShapeError

BOTTLENECKS = 2


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


# ---------------------------------------------------------------- conv units

def conv_bn_silu(x: Tensor, p: BlockParams, stride: int = 1, name: str = "conv",
                 depthwise: bool = False, act: bool = True) -> Tensor:
    """
    Conv -> BatchNorm -> SiLU, padding K//2.

    Args:
        x: Input (N, C_in, H, W)
        p: Parameters holding unit `name`
        stride: Conv stride
        name: Unit name inside `p`
        depthwise: Run the kernel per channel (groups = C_in)
        act: Apply SiLU after BatchNorm

    Returns:
        Output feature map
    """
    w = p[f"{name}.w"]
    bias = p.tensors.get(f"{name}.b")
    k = w.shape[-1]
    groups = x.shape[1] if depthwise else 1
    y = ops.conv2d(x, w, bias, stride=stride, padding=k // 2, groups=groups)
    if name in p.bn_states:
        y = ops.batchnorm(y, p[f"{name}.bn.g"], p[f"{name}.bn.b"], p.bn_states[name])
    return ops.silu(y) if act else y


def init_conv(p: BlockParams, name: str, c_in: int, c_out: int, k: int, rng: np.random.Generator) -> None:
    p.add_conv(name, c_in, c_out, k, rng)


def init_dsconv(p: BlockParams, name: str, c_in: int, c_out: int, rng: np.random.Generator, k: int = 3) -> None:
    p.add_conv(f"{name}.dw", c_in, c_in, k, rng, groups=c_in)
    p.add_conv(f"{name}.pw", c_in, c_out, 1, rng)


def dsconv(x: Tensor, p: BlockParams, name: str = "dsconv", stride: int = 1) -> Tensor:
    """Depthwise 3x3 (BN, SiLU) followed by pointwise 1x1 (BN, SiLU)."""
    y = conv_bn_silu(x, p, stride, f"{name}.dw", depthwise=True)
    return conv_bn_silu(y, p, 1, f"{name}.pw")


def dsconv_param_count(c_in: int, c_out: int, k: int = 3) -> int:
    return conv_param_count(c_in, c_in, k, groups=c_in) + conv_param_count(c_in, c_out, 1)


# ---------------------------------------------------------------- C3k2

def init_c3k2(p: BlockParams, prefix: str, c: int, depthwise: bool, rng: np.random.Generator) -> None:
    if c % 2:
        raise ShapeError("c3k2", f"channel count must be even, got {c}")
    h = c // 2
    for i in range(BOTTLENECKS):
        for unit in ("cv1", "cv2"):
            name = _join(prefix, f"m{i}.{unit}")
            if depthwise:
                init_dsconv(p, name, h, h, rng)
            else:
                init_conv(p, name, h, h, 3, rng)
    init_conv(p, _join(prefix, "proj"), c, c, 1, rng)


def _bottleneck(x: Tensor, p: BlockParams, name: str, depthwise: bool) -> Tensor:
    y = x
    for unit in ("cv1", "cv2"):
        unit_name = f"{name}.{unit}"
        y = dsconv(y, p, unit_name) if depthwise else conv_bn_silu(y, p, 1, unit_name)
    return ops.add(x, y)


def c3k2(x: Tensor, p: BlockParams, depthwise: bool, prefix: str = "") -> Tensor:
    """
    Split channels in half, run two residual 3x3 bottlenecks on the second
    half, concatenate with the untouched half and project with a 1x1 conv.
    The depthwise variant swaps each 3x3 for depthwise 3x3 + pointwise 1x1.
    """
    c = x.shape[1]
    if c % 2:
        raise ShapeError("c3k2", f"channel count must be even, got {c}")
    kept, y = ops.split_channels(x, c // 2)
    for i in range(BOTTLENECKS):
        y = _bottleneck(y, p, _join(prefix, f"m{i}"), depthwise)
    return conv_bn_silu(ops.concat_channels(kept, y), p, 1, _join(prefix, "proj"))


def c3k2_param_count(c: int, depthwise: bool) -> int:
    h = c // 2
    unit = dsconv_param_count(h, h) if depthwise else conv_param_count(h, h, 3)
    return BOTTLENECKS * 2 * unit + conv_param_count(c, c, 1)


# ---------------------------------------------------------------- Ghost fusion

def init_ghost(p: BlockParams, prefix: str, c_in: int, c_out: int, rng: np.random.Generator) -> None:
    if c_out % 2:
        raise ShapeError("ghost_fuse", f"output channels must be even, got {c_out}")
    p.add_conv(_join(prefix, "primary"), c_in, c_out // 2, 1, rng)
    p.add_conv(_join(prefix, "cheap"), c_out // 2, c_out // 2, 3, rng, groups=c_out // 2)


def ghost_fuse(a: Tensor, b: Tensor, p: BlockParams, prefix: str = "", skip: Optional[Tensor] = None) -> Tensor:
    """
    Fuse feature maps at a neck node.

    The concatenated inputs go through a pointwise conv producing half of the
    output channels; a depthwise 3x3 (BN, no activation) derives the other
    half from them.

    Args:
        a: First input
        b: Second input, same spatial extent
        p: Parameters
        prefix: Name prefix of the ghost units
        skip: Optional third input (backbone skip connection)

    Returns:
        (N, C_out, H, W) fused map
    """
    parts = [a, b] if skip is None else [a, b, skip]
    for t in parts[1:]:
        if t.shape[2:] != a.shape[2:] or t.shape[0] != a.shape[0]:
            raise ShapeError("ghost_fuse", f"extent mismatch {a.shape} vs {t.shape}")
    x = ops.concat(parts, axis=1)
    primary = conv_bn_silu(x, p, 1, _join(prefix, "primary"))
    ghost = conv_bn_silu(primary, p, 1, _join(prefix, "cheap"), depthwise=True, act=False)
    return ops.concat_channels(primary, ghost)


def ghost_param_count(c_in: int, c_out: int) -> int:
    h = c_out // 2
    return conv_param_count(c_in, h, 1) + conv_param_count(h, h, 3, groups=h)


# ---------------------------------------------------------------- SPPF

def init_sppf(p: BlockParams, prefix: str, c: int, rng: np.random.Generator) -> None:
    init_conv(p, _join(prefix, "cv1"), c, c // 2, 1, rng)
    init_conv(p, _join(prefix, "cv2"), 4 * (c // 2), c, 1, rng)


def sppf(x: Tensor, p: BlockParams, prefix: str = "") -> Tensor:
    """proj(concat(x', m1, m2, m3)) with x' a 1x1 reduction and m_i chained 5x5 max pools."""
    reduced = conv_bn_silu(x, p, 1, _join(prefix, "cv1"))
    pooled = [reduced]
    for _ in range(3):
        pooled.append(ops.pool(pooled[-1], "max5x5"))
    return conv_bn_silu(ops.concat(pooled, axis=1), p, 1, _join(prefix, "cv2"))


def sppf_param_count(c: int) -> int:
    h = c // 2
    return conv_param_count(c, h, 1) + conv_param_count(4 * h, c, 1)


# ---------------------------------------------------------------- C2PSA-lite

def init_c2psa(p: BlockParams, prefix: str, c: int, spatial: Tuple[int, int], rng: np.random.Generator) -> None:
    h = c // 2
    init_conv(p, _join(prefix, "cv1"), c, c, 1, rng)
    p.add(_join(prefix, "pos"), rng.normal(scale=0.02, size=(1, h) + tuple(spatial)))
    for unit in ("q", "k", "v", "out"):
        p.add_conv(_join(prefix, unit), h, h, 1, rng, bn=False, bias=True)
    init_conv(p, _join(prefix, "ffn1"), h, 2 * h, 1, rng)
    init_conv(p, _join(prefix, "ffn2"), 2 * h, h, 1, rng)
    init_conv(p, _join(prefix, "cv2"), c, c, 1, rng)


def positional_attention(x: Tensor, p: BlockParams, prefix: str = "") -> Tuple[Tensor, Tensor]:
    """
    Single-head scaled dot-product self-attention over spatial positions.

    Args:
        x: Input (N, h, H, W)
        p: Parameters with q/k/v/out projections and the positional embedding
        prefix: Name prefix

    Returns:
        (projected attention output (N, h, H, W), attention matrix (N, HW, HW))
    """
    pos = p[_join(prefix, "pos")]
    if pos.shape[1:] != x.shape[1:]:
        raise ShapeError("c2psa_lite", f"positional embedding built for {pos.shape[1:]}, input is {x.shape[1:]}")
    n, h, rows, cols = x.shape
    positions = rows * cols
    t = ops.add(x, pos)

    def project(unit: str) -> Tensor:
        name = _join(prefix, unit)
        return ops.reshape(ops.conv2d(t, p[f"{name}.w"], p[f"{name}.b"]), (n, h, positions))

    q, k, v = project("q"), project("k"), project("v")
    scores = ops.mul(ops.matmul(ops.transpose(q, (0, 2, 1)), k), 1.0 / math.sqrt(h))
    attn = ops.softmax(scores, axis=-1)
    mixed = ops.reshape(ops.matmul(v, ops.transpose(attn, (0, 2, 1))), (n, h, rows, cols))
    out_name = _join(prefix, "out")
    return ops.conv2d(mixed, p[f"{out_name}.w"], p[f"{out_name}.b"]), attn


def c2psa_lite(x: Tensor, p: BlockParams, prefix: str = "") -> Tensor:
    """CSP split; the second half gets positional attention and an FFN, both residual."""
    y = conv_bn_silu(x, p, 1, _join(prefix, "cv1"))
    # the attended half is sized by its projections; the kept half may be pruned
    attended_c = p[f"{_join(prefix, 'q')}.w"].shape[1]
    kept, half = ops.split_channels(y, y.shape[1] - attended_c)
    attended, _ = positional_attention(half, p, prefix)
    half = ops.add(half, attended)
    ffn = conv_bn_silu(half, p, 1, _join(prefix, "ffn1"))
    ffn = conv_bn_silu(ffn, p, 1, _join(prefix, "ffn2"), act=False)
    half = ops.add(half, ffn)
    return conv_bn_silu(ops.concat_channels(kept, half), p, 1, _join(prefix, "cv2"))


def c2psa_param_count(c: int, spatial: Tuple[int, int]) -> int:
    h = c // 2
    attention = 4 * conv_param_count(h, h, 1, bn=False, bias=True) + h * spatial[0] * spatial[1]
    ffn = conv_param_count(h, 2 * h, 1) + conv_param_count(2 * h, h, 1)
    return 2 * conv_param_count(c, c, 1) + attention + ffn
