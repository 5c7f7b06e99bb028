from typing import Dict, Optional

import numpy as np

from model.builder import forward
from model.head import cdh_param_count, decoupled_head_param_count
from model.model_graph import ModelGraph
from tensor.utils.flop_counter import FlopCounter

GROUPS = ("backbone", "neck", "head")


def count_params(model: ModelGraph) -> int:
    """Learnable parameters; BatchNorm running statistics are buffers and not counted."""
    return int(sum(layer.params.count() for layer in model.layers))


def params_by_group(model: ModelGraph) -> Dict[str, int]:
    return {g: int(sum(layer.params.count() for layer in model.layers_of(g))) for g in GROUPS}


def profile_flops(model: ModelGraph, input_size: Optional[int] = None) -> FlopCounter:
    """Run one eval forward on a zero image under a FlopCounter."""
    size = input_size or model.input_size
    with FlopCounter() as counter:
        forward(model, np.zeros((1, 3, size, size)), mode="eval")
    return counter


def count_flops(model: ModelGraph, input_size: Optional[int] = None) -> int:
    """FLOPs of one image as 2·MACs of convolutions and matrix products."""
    return profile_flops(model, input_size).total


def flops_by_group(model: ModelGraph, input_size: Optional[int] = None) -> Dict[str, int]:
    counter = profile_flops(model, input_size)
    return {g: counter.by_scope.get(g, 0) for g in GROUPS}


def decoupled_head_params(model: ModelGraph) -> int:
    """Size of a conventional decoupled head on the same neck outputs."""
    in_channels = [model.layers[i].c_out for i in model.head.inputs]
    return decoupled_head_param_count(in_channels, model.num_classes, model.reg_max)


def compact_head_params(model: ModelGraph) -> int:
    """Closed-form size of the unpruned compact head at the model's widths."""
    in_channels = [model.layers[i].c_out for i in model.head.inputs]
    return cdh_param_count(in_channels, model.head.c_out, model.num_classes, model.reg_max)
