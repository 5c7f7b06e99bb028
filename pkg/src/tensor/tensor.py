import contextlib
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.errors import ShapeError

DTYPE = np.float64

_grad_enabled = True

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run ops without recording them on the tape."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class OpNode:
    """
    One recorded operation.

    The backward closure owns whatever intermediates the op saved and maps
    the output gradient to one gradient per input (None for inputs that do
    not need one).
    """

    __slots__ = ("kind", "inputs", "backward_fn")

    def __init__(self, kind: str, inputs: Tuple["Tensor", ...], backward_fn: BackwardFn):
        self.kind = kind
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tensor:
    """
    Dense float64 array with an optional gradient and a link to the op that made it.

    Args:
        data: Array-like payload, converted to float64
        requires_grad: Whether backward() should produce a gradient for it
    """

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[OpNode] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", f"tensor has {self.data.size} elements, expected 1")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # Operator sugar; the kernels live in tensor.ops
    def __add__(self, other):
        from tensor import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from tensor import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from tensor import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from tensor import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from tensor import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from tensor import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from tensor import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from tensor import ops
        return ops.div(other, self)

    def __neg__(self):
        from tensor import ops
        return ops.neg(self)

    def __pow__(self, exponent: float):
        from tensor import ops
        return ops.power(self, exponent)

    def __matmul__(self, other):
        from tensor import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from tensor import ops
        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        from tensor import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from tensor import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from tensor import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from tensor import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)


def as_tensor(value: Union["Tensor", ArrayLike]) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def make_result(data: np.ndarray, kind: str, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """
    Wrap an op's output, recording a tape node when any input needs a gradient.

    Args:
        data: Forward result
        kind: Op name, kept for debugging and graph dumps
        inputs: Tensors the op consumed, in the order backward_fn returns grads
        backward_fn: Output grad -> per-input grads

    Returns:
        The output tensor
    """
    needs_grad = _grad_enabled and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs_grad)
    if needs_grad:
        out.node = OpNode(kind, tuple(inputs), backward_fn)
    return out


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in tensor.node.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(output: Tensor) -> None:
    """
    Reverse-mode differentiation from a scalar output.

    Leaf tensors (requires_grad and no producing op) receive their gradient
    in `.grad`, added to whatever is already there.

    Args:
        output: Scalar tensor produced through recorded ops
    """
    if output.data.size != 1:
        raise ShapeError("backward", f"output must be a scalar, got shape {output.shape}")
    if not output.requires_grad:
        return

    grads = {id(output): np.ones_like(output.data)}
    for tensor in reversed(_topological_order(output)):
        grad = grads.pop(id(tensor), None)
        if grad is None:
            continue
        if tensor.node is None:
            tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
            continue
        input_grads = tensor.node.backward_fn(grad)
        for parent, parent_grad in zip(tensor.node.inputs, input_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            if parent_grad.shape != parent.shape:
                raise ShapeError(tensor.node.kind, f"gradient shape {parent_grad.shape} != input shape {parent.shape}")
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + parent_grad
            else:
                grads[key] = parent_grad
