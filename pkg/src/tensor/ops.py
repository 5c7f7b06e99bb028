"""
Differentiable kernels over `Tensor`.

Every op computes its forward result with numpy and, when the tape is
recording, registers a closure mapping the output gradient to per-input
gradients. Broadcasting elementwise ops reduce their gradients back to
the input shapes.
"""
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from tensor.tensor import DTYPE, Tensor, as_tensor, make_result
from tensor.utils.flop_counter import record_macs
from utils.errors import ShapeError

Operand = Union[Tensor, np.ndarray, float, int]

BN_EPS = 1e-5
BN_MOMENTUM = 0.03


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- elementwise

def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result(a.data + b.data, "add", (a, b),
                       lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result(a.data - b.data, "sub", (a, b),
                       lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result(a.data * b.data, "mul", (a, b),
                       lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)))


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        return unbroadcast(g / b.data, a.shape), unbroadcast(-g * out / b.data, b.shape)

    return make_result(out, "div", (a, b), backward)


def neg(x: Operand) -> Tensor:
    x = as_tensor(x)
    return make_result(-x.data, "neg", (x,), lambda g: (-g,))


def power(x: Operand, exponent: float) -> Tensor:
    x = as_tensor(x)
    out = x.data ** exponent
    return make_result(out, "pow", (x,), lambda g: (g * exponent * x.data ** (exponent - 1),))


def exp(x: Operand) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return make_result(out, "exp", (x,), lambda g: (g * out,))


def log(x: Operand) -> Tensor:
    x = as_tensor(x)
    return make_result(np.log(x.data), "log", (x,), lambda g: (g / x.data,))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid(x: Operand) -> Tensor:
    x = as_tensor(x)
    out = _sigmoid(x.data)
    return make_result(out, "sigmoid", (x,), lambda g: (g * out * (1.0 - out),))


def silu(x: Operand) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)
    out = x.data * s
    return make_result(out, "silu", (x,), lambda g: (g * s * (1.0 + x.data * (1.0 - s)),))


def activate(x: Operand, kind: str) -> Tensor:
    if kind == "silu":
        return silu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


def atan(x: Operand) -> Tensor:
    x = as_tensor(x)
    return make_result(np.arctan(x.data), "atan", (x,), lambda g: (g / (1.0 + x.data ** 2),))


def maximum(a: Operand, b: Operand) -> Tensor:
    """Elementwise max; ties send the gradient to `a`."""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data >= b.data
    out = np.where(pick_a, a.data, b.data)
    return make_result(out, "maximum", (a, b),
                       lambda g: (unbroadcast(g * pick_a, a.shape), unbroadcast(g * ~pick_a, b.shape)))


def minimum(a: Operand, b: Operand) -> Tensor:
    """Elementwise min; ties send the gradient to `a`."""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    out = np.where(pick_a, a.data, b.data)
    return make_result(out, "minimum", (a, b),
                       lambda g: (unbroadcast(g * pick_a, a.shape), unbroadcast(g * ~pick_a, b.shape)))


def bce_with_logits(logits: Operand, targets: np.ndarray) -> Tensor:
    """
    Elementwise binary cross-entropy on logits, in the overflow-free form
    max(z, 0) - z*y + log(1 + exp(-|z|)).
    """
    z = as_tensor(logits)
    y = np.asarray(targets, dtype=DTYPE)
    if y.shape != z.shape:
        raise ShapeError("bce_with_logits", f"targets {y.shape} vs logits {z.shape}")
    out = np.maximum(z.data, 0.0) - z.data * y + np.log1p(np.exp(-np.abs(z.data)))
    return make_result(out, "bce_with_logits", (z,), lambda g: (g * (_sigmoid(z.data) - y),))


# ---------------------------------------------------------------- reductions

def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Operand, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result(out, "sum", (x,), backward)


def mean(x: Operand, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(sum(x, axis=axes, keepdims=keepdims), 1.0 / max(count, 1))


# ---------------------------------------------------------------- shape ops

def reshape(x: Operand, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    return make_result(x.data.reshape(shape), "reshape", (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Operand, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = np.argsort(axes)
    return make_result(np.transpose(x.data, axes), "transpose", (x,), lambda g: (np.transpose(g, inverse),))


def getitem(x: Operand, index) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        full = np.zeros(x.shape, dtype=DTYPE)
        np.add.at(full, index, g)
        return (full,)

    return make_result(x.data[index], "getitem", (x,), backward)


def concat(tensors: Sequence[Operand], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat", "nothing to concatenate")
    reference = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(reference) or any(
                t.shape[d] != reference[d] for d in range(len(reference)) if d != axis % len(reference)):
            raise ShapeError("concat", f"extent mismatch {reference} vs {t.shape} along axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_result(np.concatenate([t.data for t in tensors], axis=axis), "concat", tensors, backward)


def concat_channels(a: Operand, b: Operand) -> Tensor:
    return concat([a, b], axis=1)


def split_channels(x: Operand, at: int) -> Tuple[Tensor, Tensor]:
    x = as_tensor(x)
    if not 0 < at < x.shape[1]:
        raise ShapeError("split_channels", f"split index {at} outside (0, {x.shape[1]})")
    return getitem(x, (slice(None), slice(0, at))), getitem(x, (slice(None), slice(at, None)))


def matmul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", f"cannot multiply {a.shape} by {b.shape}")
    out = a.data @ b.data
    record_macs(out.size * a.shape[-1])

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return make_result(out, "matmul", (a, b), backward)


def linear(x: Operand, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ weight.T + bias with weight laid out (out, in)."""
    y = matmul(x, transpose(weight))
    return y if bias is None else add(y, bias)


def softmax(x: Operand, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return make_result(out, "softmax", (x,),
                       lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def log_softmax(x: Operand, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    return make_result(out, "log_softmax", (x,),
                       lambda g: (g - np.exp(out) * g.sum(axis=axis, keepdims=True),))


# ---------------------------------------------------------------- convolution

def _windows(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """View (N, C, Hp, Wp) as (N, C, ho, wo, k, k) sliding windows."""
    view = sliding_window_view(xp, (k, k), axis=(2, 3))
    return view[:, :, ::stride, ::stride][:, :, :ho, :wo]


def _fold_windows(gwin: np.ndarray, padded_shape: Tuple[int, ...], stride: int) -> np.ndarray:
    """Scatter-add (N, C, ho, wo, k, k) window gradients back onto the padded input."""
    n, c, ho, wo, k, _ = gwin.shape
    out = np.zeros(padded_shape, dtype=DTYPE)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += gwin[..., i, j]
    return out


def _output_extent(size: int, k: int, stride: int, padding: int, op: str) -> int:
    extent = (size + 2 * padding - k) // stride + 1
    if extent <= 0:
        raise ShapeError(op, f"input extent {size} too small for kernel {k} with padding {padding}")
    return extent


def conv2d(x: Operand, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    """
    2-D cross-correlation over NCHW input.

    Args:
        x: Input (N, C_in, H, W)
        weight: Kernel (C_out, C_in/groups, K, K)
        bias: Optional (C_out,)
        stride: Step of the sliding window, >= 1
        padding: Zero padding on every side, >= 0
        groups: Channel groups; groups == C_in == C_out is depthwise

    Returns:
        Output (N, C_out, H_out, W_out)
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("conv2d", f"expected 4-D input and kernel, got {x.shape} and {weight.shape}")
    n, c_in, h, w = x.shape
    c_out, c_per_group, k, k2 = weight.shape
    if k != k2:
        raise ShapeError("conv2d", f"only square kernels are supported, got {k}x{k2}")
    if stride < 1 or padding < 0:
        raise ShapeError("conv2d", f"invalid stride {stride} / padding {padding}")
    if groups < 1 or c_in % groups or c_out % groups:
        raise ShapeError("conv2d", f"channels {c_in}->{c_out} not divisible by groups {groups}")
    if c_per_group * groups != c_in:
        raise ShapeError("conv2d", f"kernel expects {c_per_group * groups} input channels, input has {c_in}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError("conv2d", f"bias shape {bias.shape} != ({c_out},)")

    ho = _output_extent(h, k, stride, padding, "conv2d")
    wo = _output_extent(w, k, stride, padding, "conv2d")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    win = _windows(xp, k, stride, ho, wo)
    wd = weight.data
    depthwise = groups == c_in and c_per_group == 1 and c_out == c_in

    if groups == 1:
        out = np.tensordot(win, wd, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    elif depthwise:
        out = np.einsum("nchwij,cij->nchw", win, wd[:, 0], optimize=True)
    else:
        g_out = c_out // groups
        win_g = win.reshape(n, groups, c_per_group, ho, wo, k, k)
        w_g = wd.reshape(groups, g_out, c_per_group, k, k)
        out = np.einsum("ngchwij,gocij->ngohw", win_g, w_g, optimize=True).reshape(n, c_out, ho, wo)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)
    record_macs(n * c_out * ho * wo * c_per_group * k * k)

    def backward(g):
        if groups == 1:
            gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
            gwin = np.tensordot(g, wd, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
        elif depthwise:
            gw = np.einsum("nchw,nchwij->cij", g, win, optimize=True)[:, None]
            gwin = g[..., None, None] * wd[:, 0][None, :, None, None]
        else:
            g_g = g.reshape(n, groups, c_out // groups, ho, wo)
            gw = np.einsum("ngohw,ngchwij->gocij", g_g, win_g, optimize=True).reshape(wd.shape)
            gwin = np.einsum("ngohw,gocij->ngchwij", g_g, w_g, optimize=True).reshape(n, c_in, ho, wo, k, k)
        gxp = _fold_windows(gwin, xp.shape, stride)
        gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return make_result(out, "conv2d", inputs, backward)


# ---------------------------------------------------------------- pooling

def max_pool2d(x: Operand, k: int = 5, stride: int = 1, padding: int = 2) -> Tensor:
    """Windowed max pool; padding never wins (it is -inf)."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h + 2 * padding < k or w + 2 * padding < k:
        raise ShapeError("max_pool2d", f"input {h}x{w} smaller than window {k}")
    ho = _output_extent(h, k, stride, padding, "max_pool2d")
    wo = _output_extent(w, k, stride, padding, "max_pool2d")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                constant_values=-np.inf) if padding else x.data
    win = _windows(xp, k, stride, ho, wo).reshape(n, c, ho, wo, k * k)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gxp = np.zeros(xp.shape, dtype=DTYPE)
        for t in range(k * k):
            i, j = divmod(t, k)
            gxp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += g * (arg == t)
        return (gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp,)

    return make_result(out, "max_pool2d", (x,), backward)


def global_avg_pool(x: Operand) -> Tensor:
    return mean(x, axis=(2, 3), keepdims=True)


def global_max_pool(x: Operand) -> Tensor:
    """Per-channel max over H, W; the first maximal position receives the gradient."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    flat = x.data.reshape(n, c, h * w)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1).reshape(n, c, 1, 1)

    def backward(g):
        full = np.zeros((n, c, h * w), dtype=DTYPE)
        np.put_along_axis(full, arg[..., None], g.reshape(n, c, 1), axis=-1)
        return (full.reshape(x.shape),)

    return make_result(out, "global_max_pool", (x,), backward)


def pool(x: Operand, kind: str, stride: int = 1) -> Tensor:
    """
    Pooling by kind name.

    Args:
        x: Input (N, C, H, W)
        kind: "max5x5" (pad 2), "avg_global" or "max_global"
        stride: Window step for max5x5

    Returns:
        Pooled tensor; global kinds return (N, C, 1, 1)
    """
    if kind == "max5x5":
        return max_pool2d(x, k=5, stride=stride, padding=2)
    if kind == "avg_global":
        return global_avg_pool(x)
    if kind == "max_global":
        return global_max_pool(x)
    raise ValueError(f"unknown pool kind {kind!r}")


def upsample_nearest(x: Operand, factor: int) -> Tensor:
    x = as_tensor(x)
    if factor < 1:
        raise ShapeError("upsample_nearest", f"factor must be >= 1, got {factor}")
    n, c, h, w = x.shape
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)
    return make_result(out, "upsample_nearest", (x,),
                       lambda g: (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),))


# ---------------------------------------------------------------- normalization

class BatchNormState:
    """
    Running statistics of one BatchNorm layer plus its train/eval switch.

    Args:
        channels: Number of normalized channels
        momentum: Weight of the newest batch in the running average
        eps: Added to the variance before the square root
    """

    def __init__(self, channels: int, momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
        self.running_mean = np.zeros(channels, dtype=DTYPE)
        self.running_var = np.ones(channels, dtype=DTYPE)
        self.momentum = momentum
        self.eps = eps
        self.training = True

    @property
    def channels(self) -> int:
        return self.running_mean.shape[0]

    def select(self, keep: np.ndarray) -> "BatchNormState":
        state = BatchNormState(len(keep), self.momentum, self.eps)
        state.running_mean = self.running_mean[keep].copy()
        state.running_var = self.running_var[keep].copy()
        state.training = self.training
        return state


def batchnorm(x: Operand, gamma: Tensor, beta: Tensor, state: BatchNormState, mode: Optional[str] = None) -> Tensor:
    """
    Per-channel batch normalization of NCHW input.

    Args:
        x: Input (N, C, H, W)
        gamma: Scale (C,)
        beta: Shift (C,)
        state: Running statistics, updated in train mode
        mode: "train" or "eval"; defaults to the state's own switch

    Returns:
        gamma * x_hat + beta
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,) or state.channels != c:
        raise ShapeError("batchnorm", f"{c} channels but gamma {gamma.shape}, beta {beta.shape}, "
                                      f"stats {state.channels}")
    training = state.training if mode is None else mode == "train"
    g_ = gamma.data[None, :, None, None]

    if not training:
        inv_std = 1.0 / np.sqrt(state.running_var + state.eps)
        x_hat = (x.data - state.running_mean[None, :, None, None]) * inv_std[None, :, None, None]
        out = g_ * x_hat + beta.data[None, :, None, None]

        def backward_eval(g):
            return (g * g_ * inv_std[None, :, None, None],
                    (g * x_hat).sum(axis=(0, 2, 3)),
                    g.sum(axis=(0, 2, 3)))

        return make_result(out, "batchnorm", (x, gamma, beta), backward_eval)

    axes = (0, 2, 3)
    m = x.data.size // c
    mu = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    inv_std = 1.0 / np.sqrt(var + state.eps)
    x_hat = (x.data - mu[None, :, None, None]) * inv_std[None, :, None, None]
    out = g_ * x_hat + beta.data[None, :, None, None]

    unbiased = var * m / max(m - 1, 1)
    state.running_mean = (1.0 - state.momentum) * state.running_mean + state.momentum * mu
    state.running_var = (1.0 - state.momentum) * state.running_var + state.momentum * unbiased

    def backward_train(g):
        g_sum = g.sum(axis=axes)
        gx_hat_sum = (g * x_hat).sum(axis=axes)
        gx = (g_ * inv_std[None, :, None, None] / m) * (
            m * g - g_sum[None, :, None, None] - x_hat * gx_hat_sum[None, :, None, None])
        return gx, gx_hat_sum, g_sum

    return make_result(out, "batchnorm", (x, gamma, beta), backward_train)
