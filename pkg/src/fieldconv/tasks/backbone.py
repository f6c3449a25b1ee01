"""Residual backbone over continuous-kernel convolutions.

Block layout: conv -> layer norm -> nonlinearity -> pointwise linear ->
residual add -> nonlinearity. Every kernel field receives the output
variance rescale at construction; weight normalization on sine fields is
optional. Architecture masks (width / depth / resolution) attach to the
residual branches only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from .. import archmask
from .. import masks as mk
from ..autodiff import Tensor
from ..conv import (
    ConvPlan, _shift_for_lag, conv_apply, sample_kernel,
    spectral_downsample_conv,
)
from ..fields import (
    ConfigurationError, magnet_new, piecewise_new, rescale_output_variance,
    siren_new, fourier_new,
)

__all__ = ["BackboneConfig", "Backbone", "build_backbone"]

_NONLIN = {"relu": ad.relu, "gelu": ad.gelu, "swish": ad.swish}


@dataclass
class BackboneConfig:
    in_channels: int
    hidden: int
    out_channels: int
    blocks: int = 2
    signal_len: int = 100
    kernel_size: int = None          # defaults to signal_len
    field: str = "sine"              # sine | magnet | fourier | relu | swish
    field_depth: int = 3
    field_hidden: int = 32
    omega0: float = 30.0
    alpha: float = 6.0
    beta: float = 1.0
    mode: str = "causal"
    path: str = "auto"
    nonlinearity: str = "gelu"
    weight_norm: bool = True
    flex: bool = False               # learnable kernel-size masks
    mask_sigma2: float = 0.125
    arch_masks: bool = False         # width/depth/resolution masks
    tau_channel: float = 25.0
    tau_depth: float = 8.0
    tau_resolution: float = 50.0
    head: str = "seq"                # seq | last | pool
    variance_gain: float = 1.0
    pw_gain: float = 1.3             # keeps block variance near 1 at init
    seed: int = 0


def _make_field(cfg, seed, n_out, n_in):
    if cfg.field == "sine":
        return siren_new(cfg.field_depth, cfg.field_hidden, 1, n_out, n_in,
                         omega0=cfg.omega0, seed=seed,
                         weight_norm=cfg.weight_norm)
    if cfg.field == "magnet":
        return magnet_new(cfg.field_depth, cfg.field_hidden, 1, n_out, n_in,
                          alpha=cfg.alpha, beta=cfg.beta, seed=seed)
    if cfg.field == "fourier":
        return fourier_new(cfg.field_depth, cfg.field_hidden, 1, n_out, n_in,
                           omega0=cfg.omega0, seed=seed)
    if cfg.field in ("relu", "swish"):
        return piecewise_new(cfg.field_depth, cfg.field_hidden, 1, n_out,
                             n_in, nonlinearity=cfg.field, seed=seed)
    raise ConfigurationError(f"unknown field variant: {cfg.field!r}")


class _Linear:
    """Pointwise linear layer y = x W^T + b."""

    def __init__(self, n_in, n_out, rng, gain=1.0):
        bound = gain * math.sqrt(3.0 / n_in)
        self.w = Tensor(rng.uniform(-bound, bound, size=(n_out, n_in)),
                        requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x):
        return ad.add(ad.matmul(x, ad.transpose(self.w)), self.b)

    def parameters(self):
        return [self.w, self.b]


class _LayerNorm:
    """Normalization over the channel axis with learnable scale/shift."""

    def __init__(self, n, eps=1e-5):
        self.g = Tensor(np.ones(n), requires_grad=True)
        self.b = Tensor(np.zeros(n), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        m = ad.mean(x, axis=-1, keepdims=True)
        centered = ad.sub(x, m)
        var = ad.mean(ad.square(centered), axis=-1, keepdims=True)
        xhat = ad.div(centered, ad.sqrt(ad.add(var, self.eps)))
        return ad.add(ad.mul(xhat, self.g), self.b)

    def parameters(self):
        return [self.g, self.b]


class _Block:
    def __init__(self, cfg, index, rng):
        self.cfg = cfg
        self.index = index
        k = cfg.kernel_size or cfg.signal_len
        self.plan = ConvPlan(mode=cfg.mode, path=cfg.path, kernel_size=k,
                             in_channels=cfg.hidden, out_channels=cfg.hidden)
        self.field = _make_field(cfg, cfg.seed * 1000 + index, cfg.hidden,
                                 cfg.hidden)
        rescale_output_variance(self.field, cfg.hidden, k,
                                gain=cfg.variance_gain)
        self.size_mask = None
        if cfg.flex:
            self.size_mask = mk.gaussian_mask(
                k, sigma2=cfg.mask_sigma2, hard=False
            )
        self.norm = _LayerNorm(cfg.hidden)
        self.pw = _Linear(cfg.hidden, cfg.hidden, rng, gain=cfg.pw_gain)

    def parameters(self):
        return self.field.parameters() + self.norm.parameters() + \
            self.pw.parameters()

    def mask_parameters(self):
        return list(self.size_mask.parameters()) if self.size_mask else []

    def kernel(self):
        k = self.plan.kernel_size
        return sample_kernel(self.field, k, self.cfg.mode, self.size_mask)

    def residual(self, x, res_mask=None, m_mid=None):
        if res_mask is not None:
            u = spectral_downsample_conv(x, self.field, res_mask, self.plan)
            u = _spectral_upsample(u, x.shape[-2])
        else:
            kernel, lag0 = self.kernel()
            x_in = _shift_for_lag(x, lag0, self.cfg.mode)
            u = conv_apply(x_in, kernel, self.cfg.mode, self.plan.path)
        if m_mid is not None:
            u = archmask.width_mask_apply(u, m_mid)
        act = _NONLIN[self.cfg.nonlinearity]
        u = act(self.norm(u))
        return self.pw(u)


def _spectral_upsample(y, T):
    """Zero-pad the half spectrum back to length T, preserving values."""
    L = y.shape[-2]
    if L == T:
        return y
    squeeze = y.ndim == 2
    yb = ad.reshape(y, (1,) + y.shape) if squeeze else y
    spec = ad.rfft(yb, L, axis=1)
    pad_bins = T // 2 + 1 - spec.shape[1]
    spec = ad.pad(spec, ((0, 0), (0, pad_bins), (0, 0), (0, 0)))
    out = ad.pointwise_scale(ad.irfft(spec, T, axis=1), T / L)
    return ad.reshape(out, out.shape[1:]) if squeeze else out


class Backbone:
    """Encoder, residual conv blocks, and a task head."""

    def __init__(self, cfg):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.encoder = _Linear(cfg.in_channels, cfg.hidden, rng)
        self.blocks = [_Block(cfg, i, rng) for i in range(cfg.blocks)]
        self.head = _Linear(cfg.hidden, cfg.out_channels, rng)
        self.arch = None
        if cfg.arch_masks:
            self.arch = archmask.make_arch_masks(
                cfg.blocks, cfg.hidden, cfg.signal_len,
                tau_channel=cfg.tau_channel, tau_depth=cfg.tau_depth,
                tau_resolution=cfg.tau_resolution,
            )

    def parameters(self):
        ps = self.encoder.parameters() + self.head.parameters()
        for b in self.blocks:
            ps += b.parameters()
        return ps

    def mask_parameters(self):
        ps = []
        for b in self.blocks:
            ps += b.mask_parameters()
        if self.arch is not None:
            ps += self.arch.parameters()
        return ps

    def project_parameters(self):
        for b in self.blocks:
            b.field.project_parameters()
            if b.size_mask is not None:
                mk.project_bounds(b.size_mask)
        if self.arch is not None:
            self.arch.project()

    def features(self, x):
        """Hidden features after all blocks; x is [B, T, C_in].

        With architecture masks the block is exactly identity + gate *
        branch (the end-of-block nonlinearity moves inside the gated
        branch), so a fully gated block is an exact identity and pruned
        rebuilds reproduce the forward pass.
        """
        act = _NONLIN[self.cfg.nonlinearity]
        h = self.encoder(ad.as_tensor(x))
        for i, block in enumerate(self.blocks):
            if self.arch is not None:
                m_in, m_mid, m_out = self.arch.width[i]
                branch_in = archmask.width_mask_apply(h, m_in)
                u = block.residual(branch_in,
                                   res_mask=self.arch.resolution[i],
                                   m_mid=m_mid)
                u = act(archmask.width_mask_apply(u, m_out))
                h = archmask.depth_mask_apply(u, h, self.arch.depth, i + 1)
            else:
                h = act(ad.add(h, block.residual(h)))
        return h

    def __call__(self, x):
        h = self.features(x)
        if self.cfg.head == "seq":
            return self.head(h)
        if self.cfg.head == "last":
            last = ad.slice_(h, (slice(None), slice(h.shape[1] - 1, None)))
            return ad.reshape(self.head(last), (h.shape[0], -1))
        if self.cfg.head == "pool":
            return self.head(ad.mean(h, axis=1))
        raise ConfigurationError(f"unknown head: {self.cfg.head!r}")

    def count_parameters(self):
        return sum(p.size for p in self.parameters())

    def alias_penalty(self, mode="per_layer"):
        """Sum of alias losses over blocks (magnet fields only)."""
        from .. import spectral

        total = None
        for b in self.blocks:
            term = spectral.alias_loss(
                b.field, b.size_mask, b.plan.kernel_size, mode=mode
            )
            total = term if total is None else ad.add(total, term)
        return total

    def network_cost(self):
        if self.arch is None:
            raise ConfigurationError("backbone was built without arch masks")
        return archmask.network_cost(self.arch, self.cfg.signal_len)


def build_backbone(cfg):
    """Construct the backbone; parameter count is a function of cfg."""
    if cfg.blocks < 1:
        raise ConfigurationError("need at least one block")
    if cfg.hidden < 1 or cfg.in_channels < 1 or cfg.out_channels < 1:
        raise ConfigurationError("channel counts must be positive")
    if (cfg.kernel_size or cfg.signal_len) > cfg.signal_len and \
            cfg.mode == "centered":
        raise ConfigurationError(
            "centered kernels cannot exceed the signal length"
        )
    return Backbone(cfg)
