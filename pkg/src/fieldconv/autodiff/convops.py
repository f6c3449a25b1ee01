"""Direct 1-d convolution primitives (dense and depthwise).

Layout conventions:
  signals  [T, C] or [B, T, C]
  kernels  [K, C_out, C_in]   (dense)   /   [K, C] (depthwise)
  lag of tap j: causal -> j, centered -> j - K//2 (the extra tap of an
  even-length centered kernel sits on the negative-lag side).

out(b, t, o) = sum_{j, c} kernel[j, o, c] * x(b, t - lag_j, c), with zero
padding outside the signal.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import as_tensor, record

__all__ = ["conv1d", "dwconv1d", "pad_split"]


def pad_split(k, mode):
    """(left, right) zero padding for a length-k kernel in the given mode."""
    if mode == "causal":
        return k - 1, 0
    if mode == "centered":
        return k - 1 - k // 2, k // 2
    raise ValueError(f"unknown conv mode: {mode!r}")


def _as_batched(x):
    if x.ndim == 2:
        return x[None], True
    if x.ndim == 3:
        return x, False
    raise ValueError(f"signal must be [T, C] or [B, T, C], got {x.shape}")


def conv1d(x, kernel, mode="causal"):
    """Dense 1-d convolution over the time axis."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    xd, squeeze = _as_batched(x.data)
    kd = kernel.data
    if kd.ndim != 3:
        raise ValueError(f"kernel must be [K, C_out, C_in], got {kd.shape}")
    k = kd.shape[0]
    if kd.shape[2] != xd.shape[2]:
        raise ValueError(
            f"channel mismatch: signal {xd.shape[2]} vs kernel {kd.shape[2]}"
        )
    left, right = pad_split(k, mode)
    xp = np.pad(xd, ((0, 0), (left, right), (0, 0)))
    win = sliding_window_view(xp, k, axis=1)  # [B, T, C, K]
    krev = kd[::-1]  # window index u corresponds to lag K-1-u
    out = np.einsum("btcu,uoc->bto", win, krev, optimize=True)

    def vjp(g):
        gd = g if not squeeze else g[None]
        gk_rev = np.einsum("btcu,bto->uoc", win, gd, optimize=True)
        gk = gk_rev[::-1].copy()
        # grad wrt x is the correlation with the kernel: mirrored padding
        gp = np.pad(gd, ((0, 0), (right, left), (0, 0)))
        gwin = sliding_window_view(gp, k, axis=1)  # [B, T, C_out, K]
        gx = np.einsum("btou,uoc->btc", gwin, kd, optimize=True)
        if squeeze:
            gx = gx[0]
        return gx, gk

    out_final = out[0] if squeeze else out
    return record((x, kernel), out_final, vjp)


def dwconv1d(x, kernel, mode="causal"):
    """Depthwise (channelwise) 1-d convolution; kernel is [K, C]."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    xd, squeeze = _as_batched(x.data)
    kd = kernel.data
    if kd.ndim != 2:
        raise ValueError(f"depthwise kernel must be [K, C], got {kd.shape}")
    k = kd.shape[0]
    if kd.shape[1] != xd.shape[2]:
        raise ValueError(
            f"channel mismatch: signal {xd.shape[2]} vs kernel {kd.shape[1]}"
        )
    left, right = pad_split(k, mode)
    xp = np.pad(xd, ((0, 0), (left, right), (0, 0)))
    win = sliding_window_view(xp, k, axis=1)  # [B, T, C, K]
    krev = kd[::-1]
    out = np.einsum("btcu,uc->btc", win, krev, optimize=True)

    def vjp(g):
        gd = g if not squeeze else g[None]
        gk_rev = np.einsum("btcu,btc->uc", win, gd, optimize=True)
        gk = gk_rev[::-1].copy()
        gp = np.pad(gd, ((0, 0), (right, left), (0, 0)))
        gwin = sliding_window_view(gp, k, axis=1)
        gx = np.einsum("btcu,uc->btc", gwin, kd, optimize=True)
        if squeeze:
            gx = gx[0]
        return gx, gk

    out_final = out[0] if squeeze else out
    return record((x, kernel), out_final, vjp)
