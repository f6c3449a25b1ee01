"""Reverse-mode automatic differentiation on dense numpy-backed tensors."""

from .tensor import (
    Tensor, Tape, Node, current_tape, no_grad, as_tensor,
    set_default_dtype, default_dtype,
)
from .check import finite_diff_check, finite_diff_check_many, grad_of
from .convops import conv1d, dwconv1d, pad_split
from .fourier import rfft, irfft, cmul, cmul_mix, next_pow2
from .ops import (
    add, sub, mul, div, negate, matmul, sum_, mean, max_, min_, maximum,
    minimum, abs_, exp, log, sin, cos, sigmoid, softmax, log_softmax,
    square, sqrt, reshape, broadcast_to, transpose, concat, slice_, pad,
    pointwise_scale, clip_straight_through, hard_gate, relu, swish, gelu,
    stack_last,
)

# name -> callable table for the generic dispatch surface
PRIMITIVES = {
    "add": add, "sub": sub, "mul": mul, "div": div, "negate": negate,
    "matmul": matmul, "sum": sum_, "mean": mean, "max": max_, "min": min_,
    "maximum": maximum, "minimum": minimum, "abs": abs_, "exp": exp,
    "log": log, "sin": sin, "cos": cos, "sigmoid": sigmoid,
    "softmax": softmax, "log_softmax": log_softmax, "square": square,
    "sqrt": sqrt, "reshape": reshape, "broadcast": broadcast_to,
    "transpose": transpose, "concat": concat, "slice": slice_, "pad": pad,
    "pointwise-scale": pointwise_scale,
    "clip-straight-through": clip_straight_through, "conv1d": conv1d,
    "dwconv1d": dwconv1d, "rfft": rfft, "irfft": irfft,
}


def primitive_forward(op, inputs, attrs=None):
    """Apply a primitive by id; records on the active tape as usual.

    `inputs` is a list of tensors/arrays, `attrs` a keyword map (axis,
    shape, mode, ...). Unknown ids and invalid attributes surface as
    ValueError / TypeError from the primitive itself.
    """
    if op not in PRIMITIVES:
        raise ValueError(f"unknown primitive: {op!r}")
    if op == "concat":
        return PRIMITIVES[op](list(inputs), **(attrs or {}))
    return PRIMITIVES[op](*inputs, **(attrs or {}))


__all__ = [
    "Tensor", "Tape", "Node", "current_tape", "no_grad", "as_tensor",
    "set_default_dtype", "default_dtype", "PRIMITIVES", "primitive_forward",
    "finite_diff_check", "finite_diff_check_many", "grad_of",
    "conv1d", "dwconv1d", "pad_split",
    "rfft", "irfft", "cmul", "cmul_mix", "next_pow2",
    "add", "sub", "mul", "div", "negate", "matmul", "sum_", "mean", "max_",
    "min_", "maximum", "minimum", "abs_", "exp", "log", "sin", "cos",
    "sigmoid", "softmax", "log_softmax", "square", "sqrt", "reshape",
    "broadcast_to", "transpose", "concat", "slice_", "pad",
    "pointwise_scale", "clip_straight_through", "hard_gate", "relu",
    "swish", "gelu", "stack_last",
]
