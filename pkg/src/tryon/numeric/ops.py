"""
Differentiable operations on Tensors.

Each op computes its forward value with numpy and registers a closure that
maps the output gradient to one gradient per parent (None for constants).
Broadcasting is supported for the elementwise ops; gradients are reduced
back to the parent shapes.
"""

from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..error_handling import ConfigurationError, InputError
from .tensor import Tensor, as_tensor, make_result, unbroadcast


# --- Elementwise ---

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return make_result(a.data + b.data, (a, b), _backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return make_result(a.data - b.data, (a, b), _backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return make_result(a.data * b.data, (a, b), _backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        return (unbroadcast(g / b.data, a.shape),
                unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return make_result(a.data / b.data, (a, b), _backward, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_result(-a.data, (a,), lambda g: (-g,), "neg")


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data)
    return make_result(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def silu(x: Tensor) -> Tensor:
    s = expit(x.data)

    def _backward(g):
        return (g * s * (1.0 + x.data * (1.0 - s)),)

    return make_result(x.data * s, (x,), _backward, "silu")


def clip(x: Tensor, low: float, high: float) -> Tensor:
    inside = (x.data >= low) & (x.data <= high)
    return make_result(np.clip(x.data, low, high), (x,), lambda g: (g * inside,), "clip")


# --- Reductions ---

def _normalize_axes(axis, ndim) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _normalize_axes(axis, x.ndim)
    value = x.data.sum(axis=axes, keepdims=keepdims)

    def _backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result(value, (x,), _backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(sum(x, axis=axes, keepdims=keepdims), 1.0 / count)


def l2_norm(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Euclidean norm over `axis`; the gradient at a zero vector is taken as zero."""
    axes = _normalize_axes(axis, x.ndim)
    norm = np.sqrt(np.square(x.data).sum(axis=axes, keepdims=True))

    def _backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        safe = np.where(norm > 0.0, norm, 1.0)
        return (np.where(norm > 0.0, g * x.data / safe, 0.0),)

    value = norm if keepdims else np.squeeze(norm, axis=axes)
    return make_result(value, (x,), _backward, "l2_norm")


def mse(a: Tensor, b) -> Tensor:
    diff = sub(a, b)
    return mean(mul(diff, diff))


# --- Shape ---

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    inverse = np.argsort(axes)
    return make_result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),), "transpose")


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis = axis % x.ndim
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def _backward(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return make_result(x.data[index], (x,), _backward, "slice")


def concat(tensors: Sequence, axis: int) -> Tensor:
    """Concatenate along `axis`; channel concat is axis 1, width concat axis -1."""
    tensors = [as_tensor(t) for t in tensors]
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        other_dims = [d for i, d in enumerate(t.shape) if i != axis]
        first_dims = [d for i, d in enumerate(tensors[0].shape) if i != axis]
        if t.ndim != ndim or other_dims != first_dims:
            raise InputError(
                f"Cannot concatenate shapes {tensors[0].shape} and {t.shape} along axis {axis}",
                code="LFT-E803",
            )
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def _backward(g):
        return [np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))]

    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tensors, _backward, "concat")


# --- Linear algebra ---

def _swap_last(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ConfigurationError(
            f"matmul shapes do not agree: {a.shape} @ {b.shape}",
            code="LFT-E204",
        )

    def _backward(g):
        return (unbroadcast(g @ _swap_last(b.data), a.shape),
                unbroadcast(_swap_last(a.data) @ g, b.shape))

    return make_result(a.data @ b.data, (a, b), _backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """y = x Wᵀ + b with W shaped (out, in)."""
    if x.shape[-1] != weight.shape[1]:
        raise ConfigurationError(
            f"linear input {x.shape} does not match weight {weight.shape}",
            code="LFT-E204",
        )
    out = matmul(x, transpose(weight, (1, 0)))
    return add(out, bias) if bias is not None else out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def _backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_result(y, (x,), _backward, "softmax")


# --- Convolution and resampling ---

def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """
    2-D cross-correlation of an NCHW input with an OIKK weight.

    Output spatial size is floor((H + 2p - K) / stride) + 1.

    Raises:
        ConfigurationError: when the channel counts disagree, the stride is
            not positive, or the kernel does not fit the padded input.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ConfigurationError(
            f"conv2d expects NCHW input and OIKK weight, got {x.shape} and {weight.shape}",
            code="LFT-E204",
        )
    n, c, h, w = x.shape
    out_ch, in_ch, kh, kw = weight.shape
    if c != in_ch:
        raise ConfigurationError(
            f"conv2d input {x.shape} has {c} channels but weight {weight.shape} expects {in_ch}",
            code="LFT-E204",
        )
    if stride < 1 or padding < 0:
        raise ConfigurationError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}",
                                 code="LFT-E204")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ConfigurationError(
            f"conv2d kernel {weight.shape} does not fit input {x.shape} with padding {padding}",
            code="LFT-E204",
        )

    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    out = np.einsum("ncyxij,ocij->noyx", windows, weight.data, optimize=True)
    if bias is not None:
        out = out + bias.data.reshape(1, out_ch, 1, 1)

    def _backward(g):
        grad_w = np.einsum("noyx,ncyxij->ocij", g, windows, optimize=True)
        grad_padded = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                grad_padded[:, :, i:i + stride * (out_h - 1) + 1:stride, j:j + stride * (out_w - 1) + 1:stride] += \
                    np.einsum("noyx,oc->ncyx", g, weight.data[:, :, i, j], optimize=True)
        grad_x = grad_padded[:, :, padding:padding + h, padding:padding + w]
        grads = [grad_x, grad_w]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, _backward, "conv2d")


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def _backward(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return make_result(out, (x,), _backward, "upsample")
