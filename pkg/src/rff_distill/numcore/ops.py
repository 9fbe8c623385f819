"""Differentiable primitives.

Each primitive computes its forward value with numpy and records a closure that maps
the output gradient to one gradient per input. Broadcasting is limited to numpy's
rules for the elementwise binary primitives; gradients are summed back to the input
shape.
"""

from __future__ import annotations

import logging
from typing import Any, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit
from scipy.special import logsumexp as _logsumexp

from ..core.errors import ShapeError
from .tensor import Tensor, as_tensor, record

logger = logging.getLogger(__name__)

Axis = int | tuple[int, ...] | None


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from exc


def _normalize_axes(axis: Axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# --- elementwise arithmetic -------------------------------------------------


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)

    def _backward(grad: np.ndarray):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return record("add", a.data + b.data, (a, b), _backward)


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)

    def _backward(grad: np.ndarray):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return record("sub", a.data - b.data, (a, b), _backward)


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)

    def _backward(grad: np.ndarray):
        return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)

    return record("mul", a.data * b.data, (a, b), _backward)


def div(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("div", a, b)
    out = a.data / b.data

    def _backward(grad: np.ndarray):
        return (
            _unbroadcast(grad / b.data, a.shape),
            _unbroadcast(-grad * out / b.data, b.shape),
        )

    return record("div", out, (a, b), _backward)


def neg(a: Any) -> Tensor:
    a = as_tensor(a)
    return record("neg", -a.data, (a,), lambda grad: (-grad,))


def minimum(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("minimum", a, b)
    take_a = a.data <= b.data

    def _backward(grad: np.ndarray):
        return (
            _unbroadcast(np.where(take_a, grad, 0.0), a.shape),
            _unbroadcast(np.where(take_a, 0.0, grad), b.shape),
        )

    return record("minimum", np.minimum(a.data, b.data), (a, b), _backward)


def clip(a: Any, low: Any, high: Any) -> Tensor:
    """Clamp into [low, high]; the gradient is zero where the clamp is active."""
    a = as_tensor(a)
    low_arr = np.asarray(low, dtype=np.float64)
    high_arr = np.asarray(high, dtype=np.float64)
    inside = (a.data >= low_arr) & (a.data <= high_arr)

    def _backward(grad: np.ndarray):
        return (np.where(inside, grad, 0.0),)

    return record("clip", np.clip(a.data, low_arr, high_arr), (a,), _backward)


# --- nonlinearities -----------------------------------------------------------


def sigmoid(a: Any) -> Tensor:
    a = as_tensor(a)
    out = expit(a.data)
    return record("sigmoid", out, (a,), lambda grad: (grad * out * (1.0 - out),))


def tanh(a: Any) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return record("tanh", out, (a,), lambda grad: (grad * (1.0 - out * out),))


def relu(a: Any) -> Tensor:
    a = as_tensor(a)
    active = a.data > 0
    return record(
        "relu", np.where(active, a.data, 0.0), (a,), lambda grad: (np.where(active, grad, 0.0),)
    )


def exp(a: Any) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return record("exp", out, (a,), lambda grad: (grad * out,))


def log(a: Any) -> Tensor:
    a = as_tensor(a)
    return record("log", np.log(a.data), (a,), lambda grad: (grad / a.data,))


def softmax(a: Any, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def _backward(grad: np.ndarray):
        return (out * (grad - (grad * out).sum(axis=axis, keepdims=True)),)

    return record("softmax", out, (a,), _backward)


def log_softmax(a: Any, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    lse = _logsumexp(a.data, axis=axis, keepdims=True)
    out = a.data - lse
    probs = np.exp(out)

    def _backward(grad: np.ndarray):
        return (grad - probs * grad.sum(axis=axis, keepdims=True),)

    return record("log_softmax", out, (a,), _backward)


def logsumexp(a: Any, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    lse = _logsumexp(a.data, axis=axis, keepdims=True)
    probs = np.exp(a.data - lse)
    out = lse if keepdims else np.squeeze(lse, axis=axis)

    def _backward(grad: np.ndarray):
        expanded = grad if keepdims else np.expand_dims(grad, axis)
        return (expanded * probs,)

    return record("logsumexp", out, (a,), _backward)


# --- reductions and shape plumbing --------------------------------------------


def sum(a: Any, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def _backward(grad: np.ndarray):
        expanded = grad if keepdims else np.expand_dims(grad, axes)
        return (np.broadcast_to(expanded, a.shape).copy(),)

    return record("sum", out, (a,), _backward)


def mean(a: Any, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims) if axes else a.data.copy()

    def _backward(grad: np.ndarray):
        expanded = grad if keepdims or not axes else np.expand_dims(grad, axes)
        return (np.broadcast_to(expanded / count, a.shape).copy(),)

    return record("mean", out, (a,), _backward)


def reshape(a: Any, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from exc
    return record("reshape", out, (a,), lambda grad: (grad.reshape(a.shape),))


def transpose(a: Any, axes: Sequence[int] | None = None) -> Tensor:
    a = as_tensor(a)
    perm = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    if sorted(perm) != list(range(a.ndim)):
        raise ShapeError(f"transpose: axes {perm} invalid for shape {a.shape}")
    inverse = tuple(np.argsort(perm))
    return record(
        "transpose", a.data.transpose(perm), (a,), lambda grad: (grad.transpose(inverse),)
    )


def index(a: Any, key: Any) -> Tensor:
    a = as_tensor(a)
    out = np.array(a.data[key])
    parts = key if isinstance(key, tuple) else (key,)
    basic = all(isinstance(part, (int, slice, type(None), type(Ellipsis))) for part in parts)

    def _backward(grad: np.ndarray):
        full = np.zeros_like(a.data)
        if basic:
            full[key] = grad
        else:
            np.add.at(full, key, grad)
        return (full,)

    return record("index", out, (a,), _backward)


def concat(tensors: Sequence[Any], axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("concat: no tensors given")
    ndim = parts[0].ndim
    ax = axis % ndim
    for part in parts[1:]:
        if part.ndim != ndim or any(
            part.shape[d] != parts[0].shape[d] for d in range(ndim) if d != ax
        ):
            raise ShapeError(f"concat along {axis}: shapes {[p.shape for p in parts]} disagree")
    sizes = [part.shape[ax] for part in parts]
    cuts = np.cumsum(sizes)[:-1]

    def _backward(grad: np.ndarray):
        return tuple(np.split(grad, cuts, axis=ax))

    return record("concat", np.concatenate([p.data for p in parts], axis=ax), parts, _backward)


def stack(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("stack: no tensors given")
    shapes = {part.shape for part in parts}
    if len(shapes) != 1:
        raise ShapeError(f"stack: shapes {[p.shape for p in parts]} disagree")
    out = np.stack([p.data for p in parts], axis=axis)
    ax = axis % out.ndim

    def _backward(grad: np.ndarray):
        moved = np.moveaxis(grad, ax, 0)
        return tuple(moved[i] for i in range(len(parts)))

    return record("stack", out, parts, _backward)


# --- linear algebra ---------------------------------------------------------------


def matmul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} do not broadcast") from exc

    def _backward(grad: np.ndarray):
        grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return record("matmul", out, (a, b), _backward)


# --- normalisation and regularisation -------------------------------------------


def layer_norm(a: Any, gain: Any, bias: Any, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    width = a.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise ShapeError(f"layer_norm: gain {gain.shape} / bias {bias.shape} vs features {width}")
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std
    out = normed * gain.data + bias.data

    def _backward(grad: np.ndarray):
        d_normed = grad * gain.data
        grad_a = inv_std * (
            d_normed
            - d_normed.mean(axis=-1, keepdims=True)
            - normed * (d_normed * normed).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(grad.ndim - 1))
        return grad_a, (grad * normed).sum(axis=lead), grad.sum(axis=lead)

    return record("layer_norm", out, (a, gain, bias), _backward)


def apply_mask(a: Any, mask: np.ndarray) -> Tensor:
    """Multiply by a fixed (non-differentiable) mask, e.g. a dropout draw."""
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != a.shape:
        raise ShapeError(f"apply_mask: mask {mask.shape} vs tensor {a.shape}")
    return record("apply_mask", a.data * mask, (a,), lambda grad: (grad * mask,))


def dropout(a: Any, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    a = as_tensor(a)
    if not training or rate <= 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs a seeded generator")
    keep = rng.random(a.shape) >= rate
    return apply_mask(a, keep / (1.0 - rate))


# --- convolution and pooling --------------------------------------------------------


def _conv_padding(padding: str | int, k_h: int, k_w: int) -> tuple[int, int]:
    if padding == "same":
        if k_h % 2 == 0 or k_w % 2 == 0:
            raise ShapeError(f"same padding needs odd kernels, got {k_h}x{k_w}")
        return (k_h - 1) // 2, (k_w - 1) // 2
    if padding == "valid":
        return 0, 0
    if isinstance(padding, int) and padding >= 0:
        return padding, padding
    raise ShapeError(f"unsupported padding {padding!r}")


def conv2d(
    x: Any,
    weight: Any,
    bias: Any | None = None,
    *,
    stride: int = 1,
    padding: str | int = "same",
) -> Tensor:
    """2-D cross-correlation. x: (B, C, H, W); weight: (O, C, kh, kw); bias: (O,)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} and kernel {weight.shape} do not conform")
    if stride < 1:
        raise ShapeError(f"conv2d: stride must be >= 1, got {stride}")
    _, _, height, width = x.shape
    k_h, k_w = weight.shape[2], weight.shape[3]
    pad_h, pad_w = _conv_padding(padding, k_h, k_w)
    if height + 2 * pad_h < k_h or width + 2 * pad_w < k_w:
        raise ShapeError(f"conv2d: kernel {k_h}x{k_w} larger than padded input {x.shape}")
    padded = np.pad(x.data, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    windows = sliding_window_view(padded, (k_h, k_w), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.einsum("bchwij,ocij->bohw", windows, weight.data, optimize=True)
    inputs: tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"conv2d: bias {bias.shape} vs {weight.shape[0]} output channels")
        out = out + bias.data[None, :, None, None]
        inputs = (x, weight, bias)
    out_h, out_w = out.shape[2], out.shape[3]

    def _backward(grad: np.ndarray):
        grad_w = np.einsum("bchwij,bohw->ocij", windows, grad, optimize=True)
        grad_padded = np.zeros_like(padded)
        for i in range(k_h):
            for j in range(k_w):
                rows = slice(i, i + stride * out_h, stride)
                cols = slice(j, j + stride * out_w, stride)
                grad_padded[:, :, rows, cols] += np.einsum(
                    "bohw,oc->bchw", grad, weight.data[:, :, i, j], optimize=True
                )
        grad_x = grad_padded[:, :, pad_h : pad_h + height, pad_w : pad_w + width]
        grads: list[np.ndarray] = [np.ascontiguousarray(grad_x), grad_w]
        if len(inputs) == 3:
            grads.append(grad.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return record("conv2d", out, inputs, _backward)


def _pool_blocks(x: Tensor, size: int) -> tuple[np.ndarray, int, int]:
    if x.ndim != 4:
        raise ShapeError(f"pooling expects (B, C, H, W), got {x.shape}")
    batch, channels, height, width = x.shape
    out_h, out_w = height // size, width // size
    if out_h == 0 or out_w == 0:
        raise ShapeError(f"pool size {size} larger than input {x.shape}")
    cropped = x.data[:, :, : out_h * size, : out_w * size]
    blocks = (
        cropped.reshape(batch, channels, out_h, size, out_w, size)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(batch, channels, out_h, out_w, size * size)
    )
    return blocks, out_h, out_w


def _unpool(
    grad_blocks: np.ndarray, shape: tuple[int, ...], size: int, out_h: int, out_w: int
) -> np.ndarray:
    batch, channels = shape[0], shape[1]
    grad_cropped = (
        grad_blocks.reshape(batch, channels, out_h, out_w, size, size)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(batch, channels, out_h * size, out_w * size)
    )
    full = np.zeros(shape, dtype=np.float64)
    full[:, :, : out_h * size, : out_w * size] = grad_cropped
    return full


def max_pool2d(x: Any, size: int = 2) -> Tensor:
    x = as_tensor(x)
    blocks, out_h, out_w = _pool_blocks(x, size)
    winners = blocks.argmax(axis=-1)[..., None]
    out = np.take_along_axis(blocks, winners, axis=-1)[..., 0]

    def _backward(grad: np.ndarray):
        grad_blocks = np.zeros_like(blocks)
        np.put_along_axis(grad_blocks, winners, grad[..., None], axis=-1)
        return (_unpool(grad_blocks, x.shape, size, out_h, out_w),)

    return record("max_pool2d", out, (x,), _backward)


def avg_pool2d(x: Any, size: int = 2) -> Tensor:
    x = as_tensor(x)
    blocks, out_h, out_w = _pool_blocks(x, size)
    out = blocks.mean(axis=-1)

    def _backward(grad: np.ndarray):
        grad_blocks = np.broadcast_to(grad[..., None] / (size * size), blocks.shape)
        return (_unpool(grad_blocks, x.shape, size, out_h, out_w),)

    return record("avg_pool2d", out, (x,), _backward)


# --- composite helpers ------------------------------------------------------------


def square_sum(a: Any) -> Tensor:
    a = as_tensor(a)
    return sum(mul(a, a))


def cross_entropy(logits: Any, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy of (B, C) logits against integer labels."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    log_probs = log_softmax(logits, axis=-1)
    picked = index(log_probs, (np.arange(logits.shape[0]), labels))
    return neg(mean(picked))


def softmax_kl(target_logits: Any, logits: Any) -> Tensor:
    """Row-mean KL(softmax(target) || softmax(logits)), differentiable in ``logits`` only.

    The gradient is written as ``(q - p) / B`` so identical logit rows give an exactly
    zero gradient rather than rounding noise.
    """
    target = as_tensor(target_logits).data
    logits = as_tensor(logits)
    if logits.ndim != 2 or target.shape != logits.shape:
        raise ShapeError(f"softmax_kl: target {target.shape} vs logits {logits.shape}")
    log_p = target - _logsumexp(target, axis=-1, keepdims=True)
    log_q = logits.data - _logsumexp(logits.data, axis=-1, keepdims=True)
    p, q = np.exp(log_p), np.exp(log_q)
    rows = logits.shape[0]
    out = np.sum(p * (log_p - log_q)) / rows

    def _backward(grad: np.ndarray):
        return (grad * (q - p) / rows,)

    return record("softmax_kl", np.asarray(out), (logits,), _backward)
