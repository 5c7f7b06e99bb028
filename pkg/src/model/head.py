"""
Compact detection head.

Each scale is first projected to one shared width, so a single
classification tower (depthwise 3x3, pointwise 1x1, 1x1 classifier) can
serve all three scales. Regression towers stay scale-specific.
"""
import math
from typing import Dict, List, Sequence

import numpy as np

from nn.blocks import conv_bn_silu
from nn.utils.block_params import BlockParams, conv_param_count
from tensor import ops
from tensor.tensor import Tensor

CLS_PRIOR = 0.01
REG_BIAS = 1.0


def init_cdh(p: BlockParams, in_channels: Sequence[int], width: int, num_classes: int, reg_max: int,
             rng: np.random.Generator) -> None:
    for s, c in enumerate(in_channels):
        p.add_conv(f"proj{s}", c, width, 1, rng)
    p.add_conv("cls.dw", width, width, 3, rng, groups=width)
    p.add_conv("cls.pw", width, width, 1, rng)
    p.add_conv("cls.pred", width, num_classes, 1, rng, bn=False, bias=True,
               bias_init=math.log(CLS_PRIOR / (1.0 - CLS_PRIOR)))
    for s in range(len(in_channels)):
        p.add_conv(f"reg{s}.cv1", width, width, 3, rng)
        p.add_conv(f"reg{s}.cv2", width, width, 3, rng)
        p.add_conv(f"reg{s}.pred", width, 4 * reg_max, 1, rng, bn=False, bias=True, bias_init=REG_BIAS)


def cdh_param_count(in_channels: Sequence[int], width: int, num_classes: int, reg_max: int) -> int:
    proj = sum(conv_param_count(c, width, 1) for c in in_channels)
    cls = (conv_param_count(width, width, 3, groups=width) + conv_param_count(width, width, 1)
           + conv_param_count(width, num_classes, 1, bn=False, bias=True))
    reg = 2 * conv_param_count(width, width, 3) + conv_param_count(width, 4 * reg_max, 1, bn=False, bias=True)
    return proj + cls + len(in_channels) * reg


def decoupled_head_param_count(in_channels: Sequence[int], num_classes: int, reg_max: int) -> int:
    """
    Parameters of a conventional decoupled head: per scale, separate dense
    3x3 classification and regression towers of two convs each.
    """
    cls_width = max(in_channels[0], min(num_classes, 100))
    reg_width = max(16, in_channels[0] // 4, 4 * reg_max)
    total = 0
    for c in in_channels:
        total += (conv_param_count(c, cls_width, 3) + conv_param_count(cls_width, cls_width, 3)
                  + conv_param_count(cls_width, num_classes, 1, bn=False, bias=True))
        total += (conv_param_count(c, reg_width, 3) + conv_param_count(reg_width, reg_width, 3)
                  + conv_param_count(reg_width, 4 * reg_max, 1, bn=False, bias=True))
    return total


def scale_params(p: BlockParams, s: int) -> Dict[str, Tensor]:
    """The tensors that produce scale `s`; classification entries are shared objects."""
    names = [f"proj{s}", "cls.dw", "cls.pw", "cls.pred", f"reg{s}.cv1", f"reg{s}.cv2", f"reg{s}.pred"]
    return {name: tensor for name, tensor in p.named_tensors() if name.rsplit(".", 1)[0] in names
            or name.rsplit(".", 2)[0] in names}


def cdh_forward(features: Sequence[Tensor], p: BlockParams):
    cls_logits: List[Tensor] = []
    box_dist: List[Tensor] = []
    for s, x in enumerate(features):
        f = conv_bn_silu(x, p, 1, f"proj{s}")
        c = conv_bn_silu(f, p, 1, "cls.dw", depthwise=True)
        c = conv_bn_silu(c, p, 1, "cls.pw")
        cls_logits.append(ops.conv2d(c, p["cls.pred.w"], p["cls.pred.b"]))
        r = conv_bn_silu(f, p, 1, f"reg{s}.cv1")
        r = conv_bn_silu(r, p, 1, f"reg{s}.cv2")
        box_dist.append(ops.conv2d(r, p[f"reg{s}.pred.w"], p[f"reg{s}.pred.b"]))
    return cls_logits, box_dist


def reset_classifier(p: BlockParams, rng: np.random.Generator) -> None:
    """Re-draw the 1x1 classifier and restore the class prior bias."""
    w = p["cls.pred.w"]
    bound = 1.0 / np.sqrt(w.shape[1])
    w.data = rng.uniform(-bound, bound, size=w.shape)
    p["cls.pred.b"].data = np.full(p["cls.pred.b"].shape, math.log(CLS_PRIOR / (1.0 - CLS_PRIOR)))
