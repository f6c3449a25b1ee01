"""Primitive forward/vjp pairs for the tape.

Every function returns a Tensor and, when a tape is active and any input
requires grad, records a node whose vjp closes over the saved forward
intermediates. Gradients accumulate by summation at fan-out. Ties in
max/min resolve to the first index, deterministically.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, record

__all__ = [
    "add", "sub", "mul", "div", "negate", "matmul", "sum_", "mean", "max_",
    "min_", "maximum", "minimum", "abs_", "exp", "log", "sin", "cos",
    "sigmoid", "softmax", "square", "sqrt", "reshape", "broadcast_to",
    "transpose", "concat", "slice_", "pad", "pointwise_scale",
    "clip_straight_through", "hard_gate", "relu", "swish", "gelu",
    "log_softmax", "stack_last",
]


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return record((a, b), out, vjp)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), -_unbroadcast(g, b.data.shape)

    return record((a, b), out, vjp)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return record((a, b), out, vjp)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def vjp(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return record((a, b), out, vjp)


def negate(a):
    a = as_tensor(a)
    return record((a,), -a.data, lambda g: (-g,))


def pointwise_scale(a, factor):
    """Multiply by a non-learnable python scalar."""
    a = as_tensor(a)
    c = float(factor)
    return record((a,), a.data * c, lambda g: (g * c,))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul requires operands with ndim >= 2")
    out = np.matmul(a.data, b.data)

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return record((a, b), out, vjp)


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        gd = np.asarray(g)
        if axis is not None and not keepdims:
            gd = np.expand_dims(gd, axis)
        return (np.broadcast_to(gd, a.data.shape).copy(),)

    return record((a,), out, vjp)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis] if isinstance(axis, int) else int(
            np.prod([a.data.shape[i] for i in axis])
        )

    def vjp(g):
        gd = np.asarray(g) / count
        if axis is not None and not keepdims:
            gd = np.expand_dims(gd, axis)
        return (np.broadcast_to(gd, a.data.shape).copy(),)

    return record((a,), out, vjp)


def _reduce_extreme(a, axis, keepdims, argfn):
    """Shared max/min reduction; subgradient goes to the first extremum."""
    a = as_tensor(a)
    data = a.data
    if axis is None:
        flat_idx = argfn(data)
        out = data.reshape(-1)[flat_idx]

        def vjp(g):
            gx = np.zeros_like(data).reshape(-1)
            gx[flat_idx] = np.asarray(g).reshape(())
            return (gx.reshape(data.shape),)

        return record((a,), np.asarray(out), vjp)

    idx = argfn(data, axis=axis)
    out = np.take_along_axis(data, np.expand_dims(idx, axis), axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def vjp(g):
        gd = np.asarray(g)
        if not keepdims:
            gd = np.expand_dims(gd, axis)
        gx = np.zeros_like(data)
        np.put_along_axis(gx, np.expand_dims(idx, axis), gd, axis=axis)
        return (gx,)

    return record((a,), out, vjp)


def max_(a, axis=None, keepdims=False):
    return _reduce_extreme(a, axis, keepdims, np.argmax)


def min_(a, axis=None, keepdims=False):
    return _reduce_extreme(a, axis, keepdims, np.argmin)


def maximum(a, b):
    """Elementwise max; on ties the gradient goes to the first argument."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data >= b.data
    out = np.where(take_a, a.data, b.data)

    def vjp(g):
        return (
            _unbroadcast(g * take_a, a.data.shape),
            _unbroadcast(g * ~take_a, b.data.shape),
        )

    return record((a, b), out, vjp)


def minimum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)

    def vjp(g):
        return (
            _unbroadcast(g * take_a, a.data.shape),
            _unbroadcast(g * ~take_a, b.data.shape),
        )

    return record((a, b), out, vjp)


def abs_(a):
    a = as_tensor(a)
    sign = np.sign(a.data)
    return record((a,), np.abs(a.data), lambda g: (g * sign,))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return record((a,), out, lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    return record((a,), np.log(a.data), lambda g: (g / a.data,))


def sin(a):
    a = as_tensor(a)
    c = np.cos(a.data)
    return record((a,), np.sin(a.data), lambda g: (g * c,))


def cos(a):
    a = as_tensor(a)
    s = np.sin(a.data)
    return record((a,), np.cos(a.data), lambda g: (-g * s,))


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return record((a,), out, lambda g: (g * out * (1.0 - out),))


def softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return record((a,), out, vjp)


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def vjp(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return record((a,), out, vjp)


def square(a):
    a = as_tensor(a)
    return record((a,), a.data * a.data, lambda g: (2.0 * g * a.data,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return record((a,), out, lambda g: (0.5 * g / out,))


def reshape(a, shape):
    a = as_tensor(a)
    old = a.data.shape
    return record((a,), a.data.reshape(shape), lambda g: (g.reshape(old),))


def broadcast_to(a, shape):
    a = as_tensor(a)
    out = np.broadcast_to(a.data, shape).copy()
    old = a.data.shape
    return record((a,), out, lambda g: (_unbroadcast(g, old),))


def transpose(a, axes=None):
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def vjp(g):
        return (np.transpose(g, inv),)

    return record((a,), out, vjp)


def concat(parts, axis=0):
    parts = [as_tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return record(tuple(parts), out, vjp)


def slice_(a, key):
    """Basic slicing; key is anything numpy accepts for a view."""
    a = as_tensor(a)
    out = a.data[key]

    def vjp(g):
        gx = np.zeros_like(a.data)
        gx[key] = g
        return (gx,)

    return record((a,), np.array(out, copy=True), vjp)


def pad(a, pad_width):
    a = as_tensor(a)
    out = np.pad(a.data, pad_width)
    key = tuple(
        slice(lo, dim + lo) for (lo, _), dim in zip(pad_width, a.data.shape)
    )

    def vjp(g):
        return (g[key],)

    return record((a,), out, vjp)


def clip_straight_through(a, upper):
    """Forward min(a, upper); backward passes the gradient unchanged."""
    a = as_tensor(a)
    out = np.minimum(a.data, upper)
    return record((a,), out, lambda g: (g,))


def hard_gate(a, keep):
    """Zero entries where `keep` is False; gradient gated the same way."""
    a = as_tensor(a)
    k = np.asarray(keep, dtype=a.data.dtype)
    return record((a,), a.data * k, lambda g: (g * k,))


def relu(a):
    a = as_tensor(a)
    return maximum(a, Tensor(np.zeros((), dtype=a.dtype)))


def swish(a):
    a = as_tensor(a)
    return mul(a, sigmoid(a))


def gelu(a):
    """Sigmoid approximation x * sigm(1.702 x); exact enough for training."""
    a = as_tensor(a)
    return mul(a, sigmoid(pointwise_scale(a, 1.702)))


def stack_last(parts):
    """Stack tensors along a new trailing axis (used for complex pairs)."""
    parts = [as_tensor(p) for p in parts]
    out = np.stack([p.data for p in parts], axis=-1)

    def vjp(g):
        return tuple(g[..., i] for i in range(len(parts)))

    return record(tuple(parts), out, vjp)
