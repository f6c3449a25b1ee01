"""Dense tensors on a reverse-mode tape.

A Tensor wraps a numpy array. Operations on tensors record nodes on the
currently active Tape; Tape.backward walks the recorded nodes in reverse,
accumulating vector-Jacobian products by summation. Forward evaluation
without an active tape records nothing and is safe to run concurrently.
"""

from __future__ import annotations

import threading

import numpy as np

__all__ = [
    "Tensor", "Tape", "Node", "current_tape", "no_grad", "as_tensor",
    "set_default_dtype", "default_dtype",
]

_state = threading.local()
_default_dtype = np.float64


def set_default_dtype(dtype):
    """Dtype used when wrapping python scalars/lists (f32 or f64)."""
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"default dtype must be float32/float64, got {dtype}")
    _default_dtype = dtype.type


def default_dtype():
    return _default_dtype


def _tape_stack():
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


def current_tape():
    """Active tape, or None when recording is off."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Node:
    """One recorded primitive application: inputs, output, and its vjp."""

    __slots__ = ("inputs", "output", "vjp")

    def __init__(self, inputs, output, vjp):
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


class Tape:
    """Ordered record of primitive applications.

    Nodes are appended in execution order, so every node's inputs precede
    it. One tape serves one model instance; tapes are not thread-safe.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def record(self, node):
        self.nodes.append(node)

    def backward(self, loss):
        """Propagate d(loss)/d(tensor) to every tensor on the tape.

        Returns a map id(tensor) -> gradient array and populates `.grad`
        on requires_grad leaves (tensors not produced by a recorded node).
        The tape is consumed: nodes are cleared afterwards.
        """
        if loss.data.size != 1:
            raise ValueError(
                f"backward expects a scalar loss, got shape {loss.shape}"
            )
        grads = {id(loss): np.ones_like(loss.data)}
        produced = {id(node.output) for node in self.nodes}
        for node in reversed(self.nodes):
            g_out = grads.get(id(node.output))
            if g_out is None:
                continue
            for inp, g in zip(node.inputs, node.vjp(g_out)):
                if g is None or not isinstance(inp, Tensor):
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
            # keep leaf references alive for .grad assignment below
            for inp in node.inputs:
                if isinstance(inp, Tensor) and inp.requires_grad and id(inp) not in produced:
                    g_leaf = grads.get(id(inp))
                    if g_leaf is not None:
                        inp.grad = np.reshape(g_leaf, inp.data.shape)
        self.nodes.clear()
        return grads


class no_grad:
    """Context that suppresses recording even when a tape is active."""

    def __enter__(self):
        _tape_stack().append(None)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False


class Tensor:
    """Dense n-dimensional real array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_default_dtype)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name})"

    # operator sugar; the actual primitives live in ops.py
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops

        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops

        return ops.div(other, self)

    def __neg__(self):
        from . import ops

        return ops.negate(self)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


def as_tensor(value, dtype=None):
    """Wrap scalars/arrays as constant tensors; pass tensors through.

    Bare python numbers follow the default dtype so float32 pipelines
    are not silently promoted; arrays keep their own dtype.
    """
    if isinstance(value, Tensor):
        return value
    if dtype is None and isinstance(value, (bool, int, float)):
        dtype = _default_dtype
    return Tensor(np.asarray(value, dtype=dtype))


def record(inputs, out_data, vjp):
    """Build the output tensor, recording a node when grads are wanted."""
    out = Tensor(out_data)
    tape = current_tape()
    if tape is None:
        return out
    tracked = any(isinstance(x, Tensor) and x.requires_grad for x in inputs)
    if tracked:
        out.requires_grad = True
        tape.record(Node(tuple(inputs), out, vjp))
    return out
