"""Differentiable Gaussian and sigmoid masks with a hard threshold.

A mask weights an axis (kernel positions, channels, block indices, or
frequency bins) by a value in [0, 1]. Values below the threshold T_m are
treated as zero. Because both mask families invert in closed form, the
coordinate x_Tm where the mask crosses T_m gives the materialized extent,
and a differentiable size in "axis units" follows by comparing x_Tm with
its value at construction.

Two thresholding behaviours exist:
  hard=True   in-value threshold (values below T_m evaluate to exactly 0)
  hard=False  the smooth mask is returned and T_m only delimits the
              cropped compute window (kernel-size masks)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "MaskParams", "gaussian_mask", "sigmoid_mask", "mask_eval",
    "product_mask_eval", "mask_boundary", "mask_half_width",
    "mask_size_analytic", "clip_size_straight_through", "project_bounds",
    "materialized_support", "support_window", "DEFAULT_THRESHOLD",
]

DEFAULT_THRESHOLD = 0.1


@dataclass
class MaskParams:
    kind: str                    # "gaussian" | "sigmoid"
    threshold: float
    n_init: int                  # axis length the initial extent maps to
    x_min: float
    x_max: float
    spacing: float               # grid step along the axis
    hard: bool
    learn_mu: bool
    mu: Tensor = None
    sigma2: Tensor = None        # gaussian only
    tau: float = None            # sigmoid only (hyperparameter)
    x0_tm: float = None          # boundary recorded at construction
    sigma2_floor: float = 0.0
    mu_lo: float = None
    mu_hi: float = None

    def parameters(self):
        if self.kind == "gaussian":
            return [self.sigma2, self.mu] if self.learn_mu else [self.sigma2]
        return [self.mu]


def gaussian_mask(n, x_min=-1.0, x_max=1.0, sigma2=0.125, mu=0.0,
                  threshold=DEFAULT_THRESHOLD, hard=False, learn_mu=False):
    """Gaussian mask exp(-1/2 (x-mu)^2 / sigma^2) with threshold T_m.

    Defaults follow the kernel-size use: smooth values (crop-only
    threshold) and a small initial variance.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    spacing = (x_max - x_min) / (n - 1) if n > 1 else (x_max - x_min)
    floor = spacing ** 2 / (-2.0 * math.log(threshold))
    sigma2 = max(float(sigma2), floor)
    m = MaskParams(
        # axis length in grid units (span / spacing): the analytic size
        # 2 x_Tm / (2 x0_Tm) * N then tracks the counted support within 1
        # for either grid parity
        kind="gaussian", threshold=threshold, n_init=max(n - 1, 1),
        x_min=x_min, x_max=x_max, spacing=spacing, hard=hard,
        learn_mu=learn_mu,
        mu=Tensor(np.asarray(float(mu)), requires_grad=learn_mu),
        sigma2=Tensor(np.asarray(float(sigma2)), requires_grad=True),
        sigma2_floor=floor, mu_lo=x_min, mu_hi=x_max,
    )
    # reference boundary: the half-width spanning the full axis
    m.x0_tm = (x_max - x_min) / 2.0
    return m


def sigmoid_mask(n, x_min, x_max, tau, mu=None, threshold=DEFAULT_THRESHOLD,
                 hard=True):
    """Decreasing sigmoid mask 1 - sigm(tau (x - mu)) with threshold T_m.

    mu is learnable and bounded so the mask neither collapses (value 0.95
    at x_min for mu_lo) nor saturates (value 0.85 at x_max for mu_hi).
    mu defaults to mu_hi: the full-size initialization.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    mu_lo = x_min + math.log(0.95 / 0.05) / tau
    mu_hi = x_max + math.log(0.85 / 0.15) / tau
    if mu is None:
        mu = mu_hi
    mu = min(max(float(mu), mu_lo), mu_hi)
    spacing = (x_max - x_min) / (n - 1) if n > 1 else (x_max - x_min)
    m = MaskParams(
        kind="sigmoid", threshold=threshold, n_init=n, x_min=x_min,
        x_max=x_max, spacing=spacing, hard=hard, learn_mu=True,
        mu=Tensor(np.asarray(mu), requires_grad=True), tau=float(tau),
        mu_lo=mu_lo, mu_hi=mu_hi,
    )
    m.x0_tm = float(mask_boundary(m).data)
    return m


def _smooth_eval(m, x):
    x = ad.as_tensor(x)
    if m.kind == "gaussian":
        diff = ad.sub(x, m.mu)
        quad = ad.div(ad.square(diff), ad.pointwise_scale(m.sigma2, 2.0))
        return ad.exp(ad.negate(quad))
    if m.kind == "sigmoid":
        return ad.sub(1.0, ad.sigmoid(ad.pointwise_scale(ad.sub(x, m.mu), m.tau)))
    raise ValueError(f"unknown mask kind: {m.kind!r}")


def mask_eval(m, x):
    """Mask values at coordinates x; zero below T_m when m.hard."""
    v = _smooth_eval(m, x)
    if m.hard:
        return ad.hard_gate(v, v.data >= m.threshold)
    return v


def product_mask_eval(masks, coords):
    """Product of per-axis masks at coords [P, D] -> Tensor [P]."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    if coords.shape[1] != len(masks):
        raise ValueError(
            f"{len(masks)} axis masks but coordinates have dim {coords.shape[1]}"
        )
    out = None
    for d, m in enumerate(masks):
        v = mask_eval(m, coords[:, d])
        out = v if out is None else ad.mul(out, v)
    return out


def mask_half_width(m):
    """Gaussian half-width at threshold: sqrt(-2 sigma^2 ln T_m)."""
    if m.kind != "gaussian":
        raise ValueError("half width is defined for gaussian masks")
    return ad.sqrt(ad.pointwise_scale(m.sigma2, -2.0 * math.log(m.threshold)))


def mask_boundary(m):
    """Coordinate where the mask equals T_m (positive side for gaussian)."""
    if m.kind == "gaussian":
        return ad.add(m.mu, mask_half_width(m))
    offset = math.log(1.0 / (1.0 - m.threshold) - 1.0) / m.tau
    return ad.sub(m.mu, offset)


def mask_size_analytic(m):
    """Differentiable extent of the mask in axis units.

    gaussian: (2 x_Tm / 2 x0_Tm) * N   with x_Tm the half-width
    sigmoid:  ((x_Tm - x_min) / (x0_Tm - x_min)) * N
    """
    if m.kind == "gaussian":
        ratio = ad.div(mask_half_width(m), m.x0_tm)
    else:
        ratio = ad.div(
            ad.sub(mask_boundary(m), m.x_min), m.x0_tm - m.x_min
        )
    return ad.pointwise_scale(ratio, float(m.n_init))


def clip_size_straight_through(size, n_max):
    """Forward min(size, n_max); the gradient passes through unchanged."""
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    return ad.clip_straight_through(ad.as_tensor(size), float(n_max))


def project_bounds(m):
    """Clamp parameters into the invariant region; returns True if changed."""
    changed = False
    if m.kind == "gaussian":
        if m.sigma2.data < m.sigma2_floor:
            m.sigma2.data = np.asarray(m.sigma2_floor, dtype=m.sigma2.data.dtype)
            changed = True
        if m.learn_mu and not (m.mu_lo <= float(m.mu.data) <= m.mu_hi):
            m.mu.data = np.asarray(
                min(max(float(m.mu.data), m.mu_lo), m.mu_hi),
                dtype=m.mu.data.dtype,
            )
            changed = True
    else:
        if not (m.mu_lo <= float(m.mu.data) <= m.mu_hi):
            m.mu.data = np.asarray(
                min(max(float(m.mu.data), m.mu_lo), m.mu_hi),
                dtype=m.mu.data.dtype,
            )
            changed = True
    return changed


def materialized_support(m, coords):
    """Number of grid points where the smooth mask value is >= T_m."""
    with ad.no_grad():
        v = _smooth_eval(m, np.asarray(coords, dtype=np.float64)).data
    return int(np.count_nonzero(v >= m.threshold))


def support_window(m, coords):
    """(lo, hi) index window of the cropped support on `coords`.

    hi is exclusive. Returns (0, 0) when no point clears the threshold.
    """
    with ad.no_grad():
        v = _smooth_eval(m, np.asarray(coords, dtype=np.float64)).data
    idx = np.nonzero(v >= m.threshold)[0]
    if idx.size == 0:
        return 0, 0
    return int(idx[0]), int(idx[-1]) + 1
