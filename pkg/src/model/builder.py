import contextlib
import logging
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from model.head import cdh_forward, init_cdh
from model.model_graph import STRIDES, HeadOutputs, LayerRecord, ModelGraph
from nn.blocks import (c2psa_lite, c3k2, conv_bn_silu, dsconv, ghost_fuse, init_c2psa, init_c3k2,
                       init_conv, init_dsconv, init_ghost, init_sppf, sppf)
from nn.raam import init_raam, raam
from nn.utils.block_params import BlockParams
from tensor import ops
from tensor.tensor import Tensor, no_grad
from tensor.utils.flop_counter import flop_scope
from utils.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

WIDTH_MULTIPLES = (0.125, 0.25, 0.5, 1.0)
BASE_CHANNELS = (64, 128, 256, 512, 1024)
NECK_VARIANTS = ("lfpn", "dense")


def stage_channels(width_multiple: float) -> List[int]:
    return [int(c * width_multiple) for c in BASE_CHANNELS]


class _Builder:
    """Appends layer records while tracking channel counts."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.layers: List[LayerRecord] = []

    def add(self, kind: str, inputs: List[int], c_in: int, c_out: int, stride: int, group: str) -> BlockParams:
        record = LayerRecord(len(self.layers), kind, c_in, c_out, stride, inputs, BlockParams(), group=group)
        self.layers.append(record)
        return record.params

    def c_out(self, index: int) -> int:
        return self.layers[index].c_out


def build_model(width_multiple: float = 0.25, num_classes: int = 2, input_size: int = 640,
                reg_max: int = 16, neck: str = "lfpn", seed: int = 0, raam_reduction: int = 4) -> ModelGraph:
    """
    Build backbone, neck and head at a width multiple.

    Args:
        width_multiple: One of 0.125, 0.25, 0.5, 1.0
        num_classes: Number of classes
        input_size: Square input extent, divisible by 32
        reg_max: DFL bins per side
        neck: "lfpn" (depthwise-separable, Ghost fusion) or "dense" (plain 3x3 convs)
        seed: Initialization seed
        raam_reduction: Bottleneck ratio of the channel gates

    Returns:
        The initialized model
    """
    if width_multiple not in WIDTH_MULTIPLES:
        raise ConfigError(f"width_multiple must be one of {WIDTH_MULTIPLES}, got {width_multiple}")
    if input_size <= 0 or input_size % 32:
        raise ConfigError(f"input_size must be a positive multiple of 32, got {input_size}")
    if neck not in NECK_VARIANTS:
        raise ConfigError(f"neck must be one of {NECK_VARIANTS}, got {neck!r}")
    if num_classes < 1 or reg_max < 2:
        raise ConfigError(f"need num_classes >= 1 and reg_max >= 2, got {num_classes} / {reg_max}")

    c = stage_channels(width_multiple)
    b = _Builder(np.random.default_rng(seed))
    rng = b.rng

    # Backbone, indices 0-9
    p = b.add("conv", [-1], 3, c[0], 2, "backbone"); init_conv(p, "conv", 3, c[0], 3, rng)
    p = b.add("conv", [0], c[0], c[1], 2, "backbone"); init_conv(p, "conv", c[0], c[1], 3, rng)
    p = b.add("c3k2", [1], c[1], c[1], 1, "backbone"); init_c3k2(p, "", c[1], False, rng)
    p = b.add("conv", [2], c[1], c[2], 2, "backbone"); init_conv(p, "conv", c[1], c[2], 3, rng)
    p = b.add("c3k2", [3], c[2], c[2], 1, "backbone"); init_c3k2(p, "", c[2], False, rng)
    p = b.add("conv", [4], c[2], c[3], 2, "backbone"); init_conv(p, "conv", c[2], c[3], 3, rng)
    p = b.add("c3k2", [5], c[3], c[3], 1, "backbone"); init_c3k2(p, "", c[3], False, rng)
    p = b.add("conv", [6], c[3], c[4], 2, "backbone"); init_conv(p, "conv", c[3], c[4], 3, rng)
    p = b.add("c3k2", [7], c[4], c[4], 1, "backbone"); init_c3k2(p, "", c[4], False, rng)
    p5_extent = input_size // 32
    p = b.add("sppf_c2psa", [8], c[4], c[4], 1, "backbone")
    init_sppf(p, "sppf", c[4], rng)
    init_c2psa(p, "psa", c[4], (p5_extent, p5_extent), rng)
    P3, P4, P5 = 4, 6, 9

    dense = neck == "dense"
    block_kind = "c3k2" if dense else "dw_c3k2"
    fuse_kind = "fuse_conv" if dense else "ghost"
    down_kind = "conv" if dense else "dsconv"

    def fuse(inputs: List[int], c_out: int) -> int:
        c_in = sum(b.c_out(i) for i in inputs)
        params = b.add(fuse_kind, inputs, c_in, c_out, 1, "neck")
        if dense:
            init_conv(params, "conv", c_in, c_out, 3, rng)
        else:
            init_ghost(params, "", c_in, c_out, rng)
        params = b.add(block_kind, [len(b.layers) - 1], c_out, c_out, 1, "neck")
        init_c3k2(params, "", c_out, not dense, rng)
        return len(b.layers) - 1

    def downsample(source: int) -> int:
        ch = b.c_out(source)
        params = b.add(down_kind, [source], ch, ch, 2, "neck")
        if dense:
            init_conv(params, "conv", ch, ch, 3, rng)
        else:
            init_dsconv(params, "dsconv", ch, ch, rng)
        return len(b.layers) - 1

    def gate(source: int) -> int:
        ch = b.c_out(source)
        params = b.add("raam", [source], ch, ch, 1, "neck")
        init_raam(params, "", ch, rng, raam_reduction)
        return len(b.layers) - 1

    # Top-down
    b.add("upsample", [P5], c[4], c[4], 1, "neck")
    n4 = fuse([len(b.layers) - 1, P4], c[3])
    b.add("upsample", [n4], c[3], c[3], 1, "neck")
    n3 = fuse([len(b.layers) - 1, P3], c[2])
    out3 = gate(n3)
    # Bottom-up with backbone skip at P4
    o4 = fuse([downsample(n3), n4, P4], c[3])
    out4 = gate(o4)
    out5 = fuse([downsample(o4), P5], c[4])

    head_inputs = [out3, out4, out5]
    head_width = c[2]
    p = b.add("cdh", head_inputs, sum(b.c_out(i) for i in head_inputs), head_width, 1, "head")
    init_cdh(p, [b.c_out(i) for i in head_inputs], head_width, num_classes, reg_max, rng)

    model = ModelGraph(b.layers, width_multiple, num_classes, input_size, reg_max, neck)
    logger.debug("built %s model: width %.3f, %d layers", neck, width_multiple, len(b.layers))
    return model


def run_layer(layer: LayerRecord, xs: Sequence[Tensor]):
    p = layer.params
    kind = layer.kind
    if kind == "conv":
        return conv_bn_silu(xs[0], p, layer.stride, "conv")
    if kind in ("c3k2", "dw_c3k2"):
        return c3k2(xs[0], p, kind == "dw_c3k2")
    if kind == "sppf_c2psa":
        return c2psa_lite(sppf(xs[0], p, "sppf"), p, "psa")
    if kind == "upsample":
        return ops.upsample_nearest(xs[0], 2)
    if kind == "ghost":
        return ghost_fuse(xs[0], xs[1], p, "", skip=xs[2] if len(xs) > 2 else None)
    if kind == "fuse_conv":
        return conv_bn_silu(ops.concat(list(xs), axis=1), p, 1, "conv")
    if kind == "dsconv":
        return dsconv(xs[0], p, "dsconv", stride=layer.stride)
    if kind == "raam":
        return raam(xs[0], p, p["beta"])
    if kind == "cdh":
        return cdh_forward(xs, p)
    raise ValueError(f"unknown layer kind {kind!r}")


def forward(model: ModelGraph, images: Union[Tensor, np.ndarray], mode: str = "eval") -> HeadOutputs:
    """
    Run the model.

    Args:
        model: Model to run
        images: (N, 3, S, S) in [0, 1]
        mode: "train" records the tape and uses batch statistics; "eval" does neither

    Returns:
        Per-scale head maps
    """
    if not isinstance(images, Tensor):
        images = Tensor(images)
    if images.ndim != 4 or images.shape[1] != 3:
        raise ShapeError("forward", f"expected (N, 3, S, S) images, got {images.shape}")
    if images.shape[2] % 32 or images.shape[3] % 32:
        raise ShapeError("forward", f"image extent {images.shape[2:]} not divisible by 32")
    model.set_mode(mode)

    outputs: Dict[int, object] = {}
    context = no_grad() if mode == "eval" else contextlib.nullcontext()
    with context:
        for layer in model.layers:
            xs = [images if i == -1 else outputs[i] for i in layer.inputs]
            with flop_scope(layer.group), flop_scope(f"layer{layer.index}"):
                outputs[layer.index] = run_layer(layer, xs)
    cls_logits, box_dist = outputs[model.head.index]
    return HeadOutputs(cls_logits=cls_logits, box_dist=box_dist, strides=STRIDES, reg_max=model.reg_max)
