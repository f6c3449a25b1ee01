"""Closed-form frequency analysis of Gabor-based kernel fields.

For a multiplicative Gabor network the generated kernel is a linear
combination of products of Gabor bases, so its maximum frequency has a
closed form: per channel, the sine frequency max|W_g|/(2 pi) plus the
envelope tail sigma_cut * min(gamma) / (2 pi); per bank, the channel
maximum; for the whole field, the sum over banks. A Gaussian kernel-size
mask adds sigma_cut / (2 pi max sigma). Frequencies are in cycles per
unit coordinate on the [-1, 1] kernel domain, where a length-k grid
resolves up to (k - 1) / 4.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

__all__ = [
    "FrequencyBudget", "gabor_max_freq", "magnet_max_freq",
    "flexconv_max_freq", "nyquist_freq", "alias_loss", "blur_kernel",
    "frequency_budget", "measured_spectrum", "power_above",
    "DEFAULT_SIGMA_CUT", "DEFAULT_ALIAS_WEIGHT",
]

DEFAULT_SIGMA_CUT = 2.0
DEFAULT_ALIAS_WEIGHT = 0.1

TWO_PI = 2.0 * math.pi


def _require_magnet(field):
    if field.variant != "MAGNet":
        raise ValueError(
            f"frequency analysis needs a MAGNet field, got {field.variant}"
        )


def gabor_max_freq(field, bank, sigma_cut=DEFAULT_SIGMA_CUT):
    """Per-channel f+ of one Gabor bank and the bank maximum.

    f+_sin,i  = max_j |W_g[i, j]| / (2 pi)
    f+_env,i  = sigma_cut * min_d gamma_d[i] / (2 pi)
    f+_i      = f+_sin,i + f+_env,i

    Returns (per_channel Tensor [N_hid], bank_max Tensor scalar), both
    differentiable; ties take the first index.
    """
    _require_magnet(field)
    wg = field.params[f"wg{bank}"]
    f_sin = ad.pointwise_scale(ad.max_(ad.abs_(wg), axis=1), 1.0 / TWO_PI)
    gammas = field.gamma_tensors(bank)
    g_min = gammas[0]
    for g in gammas[1:]:
        g_min = ad.minimum(g_min, g)
    f_env = ad.pointwise_scale(g_min, sigma_cut / TWO_PI)
    per_channel = ad.add(f_sin, f_env)
    return per_channel, ad.max_(per_channel)


def magnet_max_freq(field, sigma_cut=DEFAULT_SIGMA_CUT):
    """Maximum frequency of the whole field: sum of per-bank maxima."""
    _require_magnet(field)
    total = None
    for bank in range(1, field.n_gabor + 1):
        _, bank_max = gabor_max_freq(field, bank, sigma_cut)
        total = bank_max if total is None else ad.add(total, bank_max)
    return total


def mask_env_freq(size_mask, sigma_cut=DEFAULT_SIGMA_CUT):
    """Frequency added by Gaussian size masks: sigma_cut/(2 pi max sigma)."""
    if not isinstance(size_mask, (list, tuple)):
        size_mask = [size_mask]
    sigma_max = None
    for m in size_mask:
        if m.kind != "gaussian":
            raise ValueError("size masks must be gaussian")
        s = ad.sqrt(m.sigma2)
        sigma_max = s if sigma_max is None else ad.maximum(sigma_max, s)
    return ad.div(sigma_cut / TWO_PI, sigma_max)


def flexconv_max_freq(field, size_mask, sigma_cut=DEFAULT_SIGMA_CUT):
    """f+ of a masked kernel: field term plus the mask blur term."""
    return ad.add(magnet_max_freq(field, sigma_cut),
                  mask_env_freq(size_mask, sigma_cut))


def nyquist_freq(k):
    """Highest frequency a length-k grid on [-1, 1] resolves: (k - 1) / 4."""
    if k < 1:
        raise ValueError(f"kernel length must be >= 1, got {k}")
    return (k - 1) / 4.0


def alias_loss(field, size_mask=None, k=None, mode="per_layer",
               sigma_cut=DEFAULT_SIGMA_CUT):
    """Penalty on frequency content above the Nyquist limit of a k-grid.

    summed:    || max(f+, f_nyq) - f_nyq ||^2 on the total frequency
    per_layer: each Gabor bank is penalized against its share f_nyq / L,
               with the mask term spread uniformly over banks

    The caller weights the returned scalar (once) by lambda; 0.1 is the
    conventional default.
    """
    if k is None or k < 2:
        raise ValueError(f"alias_loss needs a kernel length k >= 2, got {k}")
    _require_magnet(field)
    f_nyq = nyquist_freq(k)
    if mode == "summed":
        f_plus = magnet_max_freq(field, sigma_cut)
        if size_mask is not None:
            f_plus = ad.add(f_plus, mask_env_freq(size_mask, sigma_cut))
        excess = ad.sub(ad.maximum(f_plus, f_nyq), f_nyq)
        return ad.square(excess)
    if mode == "per_layer":
        n_banks = field.n_gabor
        share = f_nyq / n_banks
        mask_term = None
        if size_mask is not None:
            mask_term = ad.pointwise_scale(
                mask_env_freq(size_mask, sigma_cut), 1.0 / n_banks
            )
        total = None
        for bank in range(1, n_banks + 1):
            _, f_bank = gabor_max_freq(field, bank, sigma_cut)
            if mask_term is not None:
                f_bank = ad.add(f_bank, mask_term)
            term = ad.square(ad.sub(ad.maximum(f_bank, share), share))
            total = term if total is None else ad.add(total, term)
        return total
    raise ValueError(f"unknown alias_loss mode: {mode!r}")


def blur_kernel(sr_train, sr_test):
    """Gaussian low-pass taps applied to kernels deployed above train rate.

    Length 2 * (sr_test / sr_train) + 1, mu = 0, sigma = 0.5, normalized
    to unit sum. A non-integer rate ratio is rounded half up with a
    warning.
    """
    if sr_train <= 0 or sr_test <= 0:
        raise ValueError("sampling rates must be positive")
    ratio = sr_test / sr_train
    r = int(math.floor(ratio + 0.5))
    if abs(ratio - r) > 1e-9:
        warnings.warn(
            f"non-integer rate ratio {ratio:.4f}; rounding to {r}",
            stacklevel=2,
        )
    r = max(r, 1)
    offsets = np.arange(-r, r + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (offsets / 0.5) ** 2)
    return taps / taps.sum()


# ---------------------------------------------------------------------------
# measured spectra and the report-facing budget


def measured_spectrum(kernel_taps, n_grid=None):
    """(freqs, power) of sampled kernel taps on the [-1, 1] grid.

    kernel_taps: [k, ...] array; power is summed over trailing axes.
    Frequencies are cycles per unit coordinate.
    """
    taps = np.asarray(kernel_taps, dtype=np.float64)
    k = taps.shape[0]
    n = n_grid or k
    spacing = 2.0 / (k - 1) if k > 1 else 1.0
    spec = np.fft.rfft(taps, n=n, axis=0)
    power = np.abs(spec) ** 2
    while power.ndim > 1:
        power = power.sum(axis=-1)
    freqs = np.fft.rfftfreq(n, d=spacing)
    return freqs, power


def power_above(kernel_taps, f_limit):
    """Fraction of spectral power above f_limit (cycles per unit)."""
    freqs, power = measured_spectrum(kernel_taps)
    total = power.sum()
    if total == 0:
        return 0.0
    return float(power[freqs > f_limit].sum() / total)


def dominant_freq(kernel_taps):
    """Frequency of the strongest non-DC bin."""
    freqs, power = measured_spectrum(kernel_taps)
    if len(power) > 1:
        return float(freqs[1 + int(np.argmax(power[1:]))])
    return 0.0


@dataclass
class FrequencyBudget:
    """Per-bank frequency usage against the Nyquist budget of a k-grid."""

    f_plus_per_layer: list
    f_plus_total: float
    f_nyquist: float
    sigma_cut: float = DEFAULT_SIGMA_CUT
    mask_term: float = 0.0

    def rows(self):
        """Report rows: (layer, f_plus, f_nyq, violation)."""
        out = []
        for i, f in enumerate(self.f_plus_per_layer, start=1):
            share = self.f_nyquist / len(self.f_plus_per_layer)
            out.append((i, f, share, max(f - share, 0.0)))
        out.append(
            (
                "total",
                self.f_plus_total,
                self.f_nyquist,
                max(self.f_plus_total - self.f_nyquist, 0.0),
            )
        )
        return out


def frequency_budget(field, k, size_mask=None, sigma_cut=DEFAULT_SIGMA_CUT):
    """Evaluate the closed-form budget of a field (plus optional mask)."""
    _require_magnet(field)
    with ad.no_grad():
        per_layer = []
        for bank in range(1, field.n_gabor + 1):
            _, bank_max = gabor_max_freq(field, bank, sigma_cut)
            per_layer.append(float(bank_max.data))
        mask_term = 0.0
        if size_mask is not None:
            mask_term = float(mask_env_freq(size_mask, sigma_cut).data)
    total = sum(per_layer) + mask_term
    return FrequencyBudget(
        f_plus_per_layer=per_layer,
        f_plus_total=total,
        f_nyquist=nyquist_freq(k),
        sigma_cut=sigma_cut,
        mask_term=mask_term,
    )
