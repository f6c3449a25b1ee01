"""Convolution engine over field-generated kernels.

Kernels are sampled from a field on the normalized [-1, 1] grid and
applied to signals either directly or through the Fourier transform
(identical up to float rounding; the fft path wins for long kernels).
Sampled tap j carries lag j (causal) or j - k//2 (centered), so causal
outputs depend only on inputs at or before the query step.

Also here: masked (size-learnable) convolution with cropped compute,
cross-resolution deployment with the rate factor and blur filter,
irregularly-sampled convolution, separable convolution, and spectral
downsampling fused into the Fourier convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import masks as mk
from . import spectral
from .autodiff import Tensor
from .fields import ConfigurationError, coord_grid

__all__ = [
    "ConvPlan", "sample_kernel", "conv_direct", "conv_fft", "conv_apply",
    "flexconv_forward", "conv_cross_resolution", "conv_irregular",
    "spectral_downsample_conv", "conv_separable", "half_gap_weights",
    "FFT_MIN_KERNEL",
]

FFT_MIN_KERNEL = 64


@dataclass
class ConvPlan:
    mode: str = "causal"            # causal | centered
    path: str = "auto"              # direct | fft | auto
    kernel_size: int = None
    in_channels: int = None
    out_channels: int = None
    separable: bool = False
    sr_train: float = 1.0
    sr_eval: float = 1.0

    def __post_init__(self):
        if self.mode not in ("causal", "centered"):
            raise ConfigurationError(f"unknown conv mode: {self.mode!r}")
        if self.path not in ("direct", "fft", "auto"):
            raise ConfigurationError(f"unknown conv path: {self.path!r}")


def sample_kernel(field, k, mode="causal", size_mask=None):
    """Sample a field on the length-k grid, optionally mask, report support.

    Returns (kernel Tensor [k', N_out, N_in], lag_offset). Taps whose mask
    value falls below the threshold are cropped from compute; lag_offset
    is the lag of the first kept tap.
    """
    if k < 1:
        raise ConfigurationError(f"kernel length must be >= 1, got {k}")
    grid = coord_grid(k, field.in_dim, mode)
    kernel = field(grid)  # [k, N_out, N_in]
    if size_mask is None:
        return kernel, 0
    axis = grid.axes[0]
    m_vals = mk.mask_eval(size_mask, axis)  # [k]
    kernel = ad.mul(kernel, ad.reshape(m_vals, (k, 1, 1)))
    lo, hi = mk.support_window(size_mask, axis)
    if hi - lo <= 0:
        raise ConfigurationError("mask support collapsed below one tap")
    if (lo, hi) != (0, k):
        kernel = ad.slice_(kernel, (slice(lo, hi),))
    return kernel, lo


def conv_direct(x, kernel, mode="causal"):
    """Direct-path convolution; exact reference for the fft path."""
    return ad.conv1d(x, kernel, mode=mode)


def conv_fft(x, kernel, mode="causal"):
    """Fourier-path convolution via the convolution theorem.

    Pads to the next power of two of T + k - 1, multiplies the half
    spectra, and crops the window matching the direct path's alignment.
    """
    x = ad.as_tensor(x)
    kernel = ad.as_tensor(kernel)
    squeeze = x.ndim == 2
    xb = ad.reshape(x, (1,) + x.shape) if squeeze else x
    T = xb.shape[1]
    k = kernel.shape[0]
    nfft = ad.next_pow2(T + k - 1)
    xs = ad.rfft(xb, nfft, axis=1)                        # [B, F, Ci, 2]
    ks = ad.rfft(kernel, nfft, axis=0)                    # [F, Co, Ci, 2]
    ys = ad.cmul_mix(xs, ks)                              # [B, F, Co, 2]
    y_full = ad.irfft(ys, nfft, axis=1)                   # [B, nfft, Co]
    start = 0 if mode == "causal" else k // 2
    y = ad.slice_(y_full, (slice(None), slice(start, start + T)))
    return ad.reshape(y, y.shape[1:]) if squeeze else y


def conv_apply(x, kernel, mode="causal", path="auto"):
    """Dispatch between direct and fft paths (fft for long kernels)."""
    if path == "auto":
        path = "fft" if kernel.shape[0] >= FFT_MIN_KERNEL else "direct"
    if path == "fft":
        return conv_fft(x, kernel, mode=mode)
    return conv_direct(x, kernel, mode=mode)


def _shift_for_lag(x, lag_offset, mode):
    """Re-align a signal so a lag-cropped kernel starts at lag zero.

    shifted(t) = x(t - lag_offset), zero outside the signal.
    """
    if lag_offset == 0:
        return x
    x = ad.as_tensor(x)
    time_axis = x.ndim - 2
    T = x.shape[time_axis]
    pad_width = [(0, 0)] * x.ndim
    key = [slice(None)] * x.ndim
    if lag_offset > 0:
        pad_width[time_axis] = (lag_offset, 0)
        key[time_axis] = slice(0, T)
    else:
        pad_width[time_axis] = (0, -lag_offset)
        key[time_axis] = slice(-lag_offset, T - lag_offset)
    shifted = ad.pad(x, tuple(pad_width))
    return ad.slice_(shifted, tuple(key))


def flexconv_forward(x, field, size_mask, plan):
    """Masked continuous convolution with compute cropped to the support.

    Gradients reach both the field parameters and the mask parameters;
    taps outside the threshold window contribute nothing.
    """
    k = plan.kernel_size
    kernel, lag0 = sample_kernel(field, k, plan.mode, size_mask)
    if plan.mode == "causal":
        x_aligned = _shift_for_lag(x, lag0, plan.mode)
        return conv_apply(x_aligned, kernel, mode="causal", path=plan.path)
    # centered: cropping shifts the kernel center by lag0 - (k//2 - k'//2)
    kp = kernel.shape[0]
    shift = lag0 - (k // 2 - kp // 2)
    x_aligned = _shift_for_lag(x, shift, plan.mode) if shift else x
    return conv_apply(x_aligned, kernel, mode="centered", path=plan.path)


def conv_cross_resolution(x_at_sr2, field, sr1, sr2, plan, size_mask=None,
                          apply_rate_factor=True):
    """Deploy a field trained at rate sr1 on a signal sampled at sr2.

    The kernel is re-sampled so the trained time span keeps its normalized
    coordinates (the last trained position maps to the same coordinate,
    avoiding displacement and re-scaling). The raw sr2 convolution equals
    roughly (sr2/sr1) times the sr1 one; with apply_rate_factor the output
    is normalized by that factor so downstream layers see the trained
    scale. Deploying above the trained rate first blurs the sampled
    kernel to suppress frequencies never seen during training.
    """
    if sr1 <= 0 or sr2 <= 0:
        raise ConfigurationError("sampling rates must be positive")
    k1 = plan.kernel_size
    if field.in_dim != 1:
        raise ConfigurationError("cross-resolution deployment is 1-d")
    if sr2 == sr1:
        kernel, lag0 = sample_kernel(field, k1, plan.mode, size_mask)
        x_aligned = _shift_for_lag(x_at_sr2, lag0, plan.mode)
        return conv_apply(x_aligned, kernel, mode=plan.mode, path=plan.path)

    ratio = sr2 / sr1
    k2 = int(math.floor((k1 - 1) * ratio + 0.5)) + 1
    if k1 > 1:
        coords = -1.0 + 2.0 * np.arange(k2) / ((k1 - 1) * ratio)
    else:
        coords = np.zeros(1)
    coords = np.minimum(coords, 1.0)
    kernel = field(coords[:, None])  # [k2, Co, Ci]
    if size_mask is not None:
        m_vals = mk.mask_eval(size_mask, coords)
        kernel = ad.mul(kernel, ad.reshape(m_vals, (k2, 1, 1)))
    if sr2 > sr1:
        taps = spectral.blur_kernel(sr1, sr2)
        blur = np.zeros((len(taps), 1, 1))
        blur[:, 0, 0] = taps
        co, ci = kernel.shape[1], kernel.shape[2]
        flat = ad.reshape(ad.transpose(kernel, (0, 2, 1)), (k2, ci * co))
        blurred = ad.dwconv1d(
            flat, ad.as_tensor(np.repeat(taps[:, None], ci * co, axis=1)),
            mode="centered",
        )
        kernel = ad.transpose(
            ad.reshape(blurred, (k2, ci, co)), (0, 2, 1)
        )
    out = conv_apply(x_at_sr2, kernel, mode=plan.mode, path=plan.path)
    if apply_rate_factor:
        out = ad.pointwise_scale(out, 1.0 / ratio)
    return out


def half_gap_weights(times):
    """Density weights from neighbour gaps: s_i = (t_{i+1} - t_{i-1}) / 2.

    One-sided at the ends. This estimator is a convenience of this
    package, not a prescribed choice; callers may supply their own.
    """
    t = np.asarray(times, dtype=np.float64)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("need at least two sample times")
    if np.any(np.diff(t) <= 0):
        raise ValueError("sample times must be strictly increasing")
    w = np.empty_like(t)
    w[1:-1] = (t[2:] - t[:-2]) / 2.0
    w[0] = t[1] - t[0]
    w[-1] = t[-1] - t[-2]
    return w


def conv_irregular(times, values, weights, field, query_times, span,
                   mode="causal"):
    """Convolution of irregular samples: out(t) = sum_i s_i x_i psi(t - t_i).

    The field is evaluated at the exact offsets, normalized so offset 0
    maps to coordinate -1 and offset `span` to +1 (causal). Offsets
    outside the trained span contribute nothing.

    times [S], values [S, C_in], weights [S] (> 0), query_times [Q].
    Returns Tensor [Q, N_out].
    """
    t = np.asarray(times, dtype=np.float64)
    q = np.asarray(query_times, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w <= 0):
        raise ValueError("density weights must be positive")
    offsets = q[:, None] - t[None, :]  # [Q, S]
    if mode == "causal":
        inside = (offsets >= 0) & (offsets <= span)
        coords = -1.0 + 2.0 * offsets / span
    else:
        inside = np.abs(offsets) <= span / 2.0
        coords = 2.0 * offsets / span
    coords = np.clip(coords, -1.0, 1.0)
    Q, S = offsets.shape
    kernel = field(coords.reshape(-1, 1))          # [Q*S, Co, Ci]
    kernel = ad.mul(
        kernel, ad.as_tensor(inside.reshape(-1, 1, 1).astype(np.float64))
    )
    co, ci = kernel.shape[1], kernel.shape[2]
    kernel = ad.reshape(kernel, (Q, S, co, ci))
    vals = ad.as_tensor(np.asarray(values, dtype=np.float64))  # [S, Ci]
    weighted = ad.mul(vals, ad.reshape(ad.as_tensor(w), (S, 1)))
    contrib = ad.mul(kernel, ad.reshape(weighted, (1, S, 1, ci)))
    return ad.sum_(ad.sum_(contrib, axis=3), axis=1)  # [Q, Co]


def conv_separable(x, channel_kernel, mix, mode="causal", path="auto"):
    """Depthwise conv with kernel [k, C_in] followed by a pointwise mix.

    mix is [C_out, C_in]; equals the full convolution with the separable
    kernel psi[j, o, c] = mix[o, c] * channel_kernel[j, c].
    """
    x = ad.as_tensor(x)
    channel_kernel = ad.as_tensor(channel_kernel)
    k = channel_kernel.shape[0]
    if path == "auto":
        path = "fft" if k >= FFT_MIN_KERNEL else "direct"
    if path == "fft":
        squeeze = x.ndim == 2
        xb = ad.reshape(x, (1,) + x.shape) if squeeze else x
        T = xb.shape[1]
        nfft = ad.next_pow2(T + k - 1)
        xs = ad.rfft(xb, nfft, axis=1)                 # [B, F, C, 2]
        ks = ad.rfft(channel_kernel, nfft, axis=0)     # [F, C, 2]
        f = ks.shape[0]
        ys = ad.cmul(xs, ad.reshape(ks, (1, f, ks.shape[1], 2)))
        y_full = ad.irfft(ys, nfft, axis=1)
        start = 0 if mode == "causal" else k // 2
        y = ad.slice_(y_full, (slice(None), slice(start, start + T)))
        if squeeze:
            y = ad.reshape(y, y.shape[1:])
    else:
        y = ad.dwconv1d(x, channel_kernel, mode=mode)
    return ad.matmul(y, ad.transpose(ad.as_tensor(mix)))


def spectral_downsample_conv(x, field, res_mask, plan, kernel=None):
    """Fourier convolution with learnable low-pass filtering and cropping.

    out = irfft( crop_{>omega_max}( mask * rfft(x * psi) ) )

    The sigmoid resolution mask lives on the rfft bin axis [0, T//2] of
    the convolution output; its boundary omega_max sets the kept bins,
    and the output length is the time-domain length those bins represent
    (the mask's analytic size, up to one sample). With the mask fully
    open and no cropped bins this reduces exactly to the plain Fourier
    convolution.
    """
    x = ad.as_tensor(x)
    squeeze = x.ndim == 2
    xb = ad.reshape(x, (1,) + x.shape) if squeeze else x
    T = xb.shape[1]
    if res_mask.kind != "sigmoid":
        raise ConfigurationError("resolution masks must be sigmoid")
    if kernel is None:
        kernel, _ = sample_kernel(field, plan.kernel_size or T, plan.mode)
    y = conv_fft(xb, kernel, mode=plan.mode)          # [B, T, Co]
    nbins = T // 2 + 1
    bins = np.arange(nbins, dtype=np.float64)
    omega_max = float(mk.mask_boundary(res_mask).data)
    keep = int(np.count_nonzero(bins <= omega_max))
    keep = min(keep, nbins)
    if keep < 2:
        raise ConfigurationError(
            "resolution mask keeps fewer than 2 frequency bins"
        )
    full = keep == nbins
    out_len = T if full else 2 * (keep - 1)
    m_vals = mk.mask_eval(res_mask, bins)             # [nbins]
    ys = ad.rfft(y, T, axis=1)                        # [B, F, Co, 2]
    ys = ad.mul(ys, ad.reshape(m_vals, (1, nbins, 1, 1)))
    if not full:
        ys = ad.slice_(ys, (slice(None), slice(0, keep)))
    z = ad.irfft(ys, out_len, axis=1)                 # [B, out_len, Co]
    z = ad.pointwise_scale(z, out_len / T)            # preserve sample values
    return ad.reshape(z, z.shape[1:]) if squeeze else z
