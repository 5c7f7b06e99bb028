import copy
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

from nn.utils.block_params import BlockParams
from tensor.tensor import Tensor

BACKBONE_LAYERS = tuple(range(10))
STRIDES = (8, 16, 32)


@dataclass
class LayerRecord:
    """One node of the layer graph. Input index -1 is the image."""
    index: int
    kind: str
    c_in: int
    c_out: int
    stride: int
    inputs: List[int]
    params: BlockParams = field(default_factory=BlockParams)
    frozen: bool = False
    group: str = "backbone"

    def named_tensors(self) -> Iterator[Tuple[str, Tensor]]:
        for name, tensor in self.params.named_tensors():
            yield f"{self.index}.{name}", tensor


@dataclass
class HeadOutputs:
    """
    Raw per-scale head maps, finest scale first.

    `cls_logits[s]` is (N, classes, S, S); `box_dist[s]` is (N, 4·B, S, S)
    with channel `side·B + bin` for sides (left, top, right, bottom).
    """
    cls_logits: List[Tensor]
    box_dist: List[Tensor]
    strides: Tuple[int, ...] = STRIDES
    reg_max: int = 16

    @property
    def batch_size(self) -> int:
        return self.cls_logits[0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.cls_logits[0].shape[1]

    def grid_shapes(self) -> List[Tuple[int, int]]:
        return [tuple(t.shape[2:]) for t in self.cls_logits]


class ModelGraph:
    """
    Ordered layer records of backbone, LFPN neck and compact head.

    Args:
        layers: Records in execution order; each input index refers to an earlier record
        width_multiple: Channel scale of the build
        num_classes: Classification outputs
        input_size: Square input extent the positional embedding was built for
        reg_max: DFL bins per box side
        neck: "lfpn" or "dense"
    """

    def __init__(self, layers: List[LayerRecord], width_multiple: float, num_classes: int,
                 input_size: int, reg_max: int = 16, neck: str = "lfpn"):
        self.layers = layers
        self.width_multiple = width_multiple
        self.num_classes = num_classes
        self.input_size = input_size
        self.reg_max = reg_max
        self.neck = neck

    def __iter__(self) -> Iterator[LayerRecord]:
        return iter(self.layers)

    def __getitem__(self, index: int) -> LayerRecord:
        return self.layers[index]

    @property
    def head(self) -> LayerRecord:
        return self.layers[-1]

    def layers_of(self, group: str) -> List[LayerRecord]:
        return [layer for layer in self.layers if layer.group == group]

    def parameters(self) -> Dict[str, Tensor]:
        """All learnable tensors keyed `<layer index>.<name>`."""
        named = {}
        for layer in self.layers:
            named.update(layer.named_tensors())
        return named

    def trainable_parameters(self) -> Dict[str, Tensor]:
        return {name: t for name, t in self.parameters().items() if t.requires_grad}

    def frozen_names(self) -> set:
        return {name for layer in self.layers if layer.frozen for name, _ in layer.named_tensors()}

    def freeze(self, indices: Iterable[int]) -> None:
        """Freeze exactly the given layer indices and thaw every other layer."""
        indices = set(indices)
        for layer in self.layers:
            layer.frozen = layer.index in indices
            layer.params.set_requires_grad(not layer.frozen)

    def set_mode(self, mode: str) -> None:
        # Frozen layers keep their stored BN statistics in train mode too
        for layer in self.layers:
            layer.params.set_training(mode == "train" and not layer.frozen)

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.params.zero_grad()

    def clone(self) -> "ModelGraph":
        return copy.deepcopy(self)

    def stage_channels(self) -> List[int]:
        return [self.layers[i].c_out for i in (0, 1, 3, 5, 7)]

    def describe(self) -> Dict[str, object]:
        return {
            "width_multiple": self.width_multiple,
            "num_classes": self.num_classes,
            "input_size": self.input_size,
            "reg_max": self.reg_max,
            "neck": self.neck,
        }
