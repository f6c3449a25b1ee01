"""Finite-difference gradient oracle."""

from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor

__all__ = ["finite_diff_check", "grad_of"]


def grad_of(f, params):
    """Analytic gradients of scalar f() w.r.t. a list of tensors."""
    for p in params:
        p.requires_grad = True
        p.grad = None
    with Tape() as tape:
        loss = f()
        if loss.data.size != 1:
            raise ValueError("grad_of expects a scalar-valued function")
        tape.backward(loss)
    return [
        p.grad if p.grad is not None else np.zeros_like(p.data) for p in params
    ]


def finite_diff_check(f, x, eps=1e-5):
    """Max relative error between analytic gradient and central differences.

    f maps the tensor x to a scalar Tensor. Error per coordinate is
    |analytic - fd| / max(|analytic|, |fd|, 1e-12).
    """
    if not (0.0 < eps <= 1e-2):
        raise ValueError(f"eps must lie in (0, 1e-2], got {eps}")
    base = float(f(x).item())
    if not np.isfinite(base):
        raise FloatingPointError("f(x) is not finite at the linearization point")
    (analytic,) = grad_of(lambda: f(x), [x])

    fd = np.zeros_like(x.data)
    for idx in np.ndindex(x.data.shape):
        orig = x.data[idx]
        x.data[idx] = orig + eps
        hi = float(f(x).item())
        x.data[idx] = orig - eps
        lo = float(f(x).item())
        x.data[idx] = orig
        fd[idx] = (hi - lo) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-12)
    return float(np.max(np.abs(analytic - fd) / denom))


def finite_diff_check_many(f, params, eps=1e-5):
    """Worst-case finite_diff_check over parameter tensors closed over by f.

    Relies on finite_diff_check perturbing each tensor's buffer in place, so
    f may ignore its argument and recompute from the live parameters.
    """
    worst = 0.0
    for p in params:
        worst = max(worst, finite_diff_check(lambda _t: f(), p, eps=eps))
    return worst
