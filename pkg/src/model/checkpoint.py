import logging
from collections import OrderedDict
from typing import Dict

import numpy as np

from model.builder import build_model
from model.model_graph import ModelGraph
from model.utils.weights_io import read_container, write_container
from tensor.ops import BatchNormState
from utils.errors import DataError

logger = logging.getLogger(__name__)

NECKS = ("lfpn", "dense")


def _meta(arrays: Dict[str, np.ndarray], key: str):
    value = np.asarray(arrays[key])
    if value.size != 1:
        raise DataError(f"weight file metadata {key} must hold one value, got shape {value.shape}")
    return value.item()


def model_to_arrays(model: ModelGraph) -> "OrderedDict[str, np.ndarray]":
    """
    Flatten a model into named arrays: build metadata, learnable tensors and
    BatchNorm running statistics.
    """
    arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
    arrays["meta.width_multiple"] = np.array(model.width_multiple)
    arrays["meta.num_classes"] = np.array(model.num_classes)
    arrays["meta.input_size"] = np.array(model.input_size)
    arrays["meta.reg_max"] = np.array(model.reg_max)
    arrays["meta.neck"] = np.array(NECKS.index(model.neck))
    for layer in model.layers:
        for name, tensor in layer.params.named_tensors():
            arrays[f"{layer.index}.{name}"] = tensor.data
        for unit, state in layer.params.bn_states.items():
            arrays[f"{layer.index}.{unit}.running_mean"] = state.running_mean
            arrays[f"{layer.index}.{unit}.running_var"] = state.running_var
    return arrays


def model_from_arrays(arrays: Dict[str, np.ndarray]) -> ModelGraph:
    """
    Rebuild a model from named arrays. Stored shapes win over the default
    build, so pruned models load with their reduced channel counts.
    """
    try:
        model = build_model(
            width_multiple=float(_meta(arrays, "meta.width_multiple")),
            num_classes=int(_meta(arrays, "meta.num_classes")),
            input_size=int(_meta(arrays, "meta.input_size")),
            reg_max=int(_meta(arrays, "meta.reg_max")),
            neck=NECKS[int(_meta(arrays, "meta.neck"))],
        )
    except KeyError as e:
        raise DataError(f"weight file lacks build metadata {e}")

    expected = set()
    for layer in model.layers:
        p = layer.params
        for name in list(p.tensors):
            key = f"{layer.index}.{name}"
            expected.add(key)
            if key not in arrays:
                raise DataError(f"weight file lacks tensor {key}")
            p.tensors[name].data = np.array(arrays[key], dtype=np.float64)
        for unit, state in list(p.bn_states.items()):
            mean_key = f"{layer.index}.{unit}.running_mean"
            var_key = f"{layer.index}.{unit}.running_var"
            expected.update((mean_key, var_key))
            if mean_key not in arrays or var_key not in arrays:
                raise DataError(f"weight file lacks statistics of {layer.index}.{unit}")
            state = BatchNormState(len(arrays[mean_key]), state.momentum, state.eps)
            state.running_mean = np.array(arrays[mean_key], dtype=np.float64)
            state.running_var = np.array(arrays[var_key], dtype=np.float64)
            p.bn_states[unit] = state
    unknown = [k for k in arrays if k not in expected and not k.startswith("meta.")]
    if unknown:
        raise DataError(f"weight file has {len(unknown)} unknown tensors, e.g. {unknown[0]}")
    return model


def save_model(model: ModelGraph, path: str) -> None:
    write_container(path, model_to_arrays(model))
    logger.info("wrote weights to %s", path)


def load_model(path: str) -> ModelGraph:
    model = model_from_arrays(read_container(path))
    logger.info("loaded %s (width %.3f, input %d)", path, model.width_multiple, model.input_size)
    return model
