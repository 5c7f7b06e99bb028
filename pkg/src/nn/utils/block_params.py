from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from tensor.ops import BatchNormState
from tensor.tensor import Tensor


def conv_param_count(c_in: int, c_out: int, k: int, groups: int = 1, bn: bool = True, bias: bool = False) -> int:
    """Learnable parameters of one conv unit: kernel, optional BN affine, optional bias."""
    return k * k * (c_in // groups) * c_out + (2 * c_out if bn else 0) + (c_out if bias else 0)


class BlockParams:
    """
    Named parameter tensors and BatchNorm running statistics of one layer.

    Conv units are stored under a unit name `u` as `u.w` (kernel), optionally
    `u.b` (bias) and, when followed by BatchNorm, `u.bn.g` / `u.bn.b` with the
    running statistics in `bn_states[u]`. Other tensors (positional
    embeddings, attention biases, RAAM beta) use plain names. Blocks read
    every extent from the stored shapes, so a pruned layer runs unchanged.
    """

    def __init__(self):
        self.tensors: Dict[str, Tensor] = {}
        self.bn_states: Dict[str, BatchNormState] = {}

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self.tensors:
            raise KeyError(f"duplicate parameter {name}")
        tensor = Tensor(np.array(array, dtype=np.float64), requires_grad=True)
        self.tensors[name] = tensor
        return tensor

    def add_conv(self, unit: str, c_in: int, c_out: int, k: int, rng: np.random.Generator,
                 groups: int = 1, bn: bool = True, bias: bool = False, bias_init: Optional[float] = None) -> None:
        """
        Create one conv unit with uniform fan-in initialization.

        Args:
            unit: Unit name
            c_in: Input channels
            c_out: Output channels
            k: Square kernel extent
            rng: Initialization stream
            groups: Channel groups (c_in for depthwise)
            bn: Follow the conv with BatchNorm
            bias: Give the conv its own bias
            bias_init: Constant bias value instead of the uniform draw
        """
        fan_in = (c_in // groups) * k * k
        bound = 1.0 / np.sqrt(fan_in)
        self.add(f"{unit}.w", rng.uniform(-bound, bound, size=(c_out, c_in // groups, k, k)))
        if bias:
            if bias_init is None:
                self.add(f"{unit}.b", rng.uniform(-bound, bound, size=c_out))
            else:
                self.add(f"{unit}.b", np.full(c_out, bias_init))
        if bn:
            self.add(f"{unit}.bn.g", np.ones(c_out))
            self.add(f"{unit}.bn.b", np.zeros(c_out))
            self.bn_states[unit] = BatchNormState(c_out)

    def add_linear(self, unit: str, c_in: int, c_out: int, rng: np.random.Generator) -> None:
        bound = 1.0 / np.sqrt(c_in)
        self.add(f"{unit}.w", rng.uniform(-bound, bound, size=(c_out, c_in)))
        self.add(f"{unit}.b", rng.uniform(-bound, bound, size=c_out))

    def named_tensors(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.tensors.items())

    def conv_units(self) -> List[str]:
        return [name[:-2] for name in self.tensors if name.endswith(".w")]

    def count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def set_training(self, training: bool) -> None:
        for state in self.bn_states.values():
            state.training = training

    def set_requires_grad(self, flag: bool) -> None:
        for tensor in self.tensors.values():
            tensor.requires_grad = flag
            if not flag:
                tensor.grad = None

    def zero_grad(self) -> None:
        for tensor in self.tensors.values():
            tensor.grad = None
