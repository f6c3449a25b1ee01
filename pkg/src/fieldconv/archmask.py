"""Architecture masking: learnable width, depth, and resolution extents.

Width masks weight feature channels, the depth mask weights whole
residual branches by block index, and resolution masks low-pass the
Fourier convolution. All sit on residual branches only, so the identity
path always carries the signal. A symbolic complexity model expresses
per-layer operation counts in the masks' differentiable sizes and
regularizes their total toward a target budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import masks as mk

__all__ = [
    "ArchMasks", "make_arch_masks", "width_mask_apply", "depth_mask_apply",
    "layer_cost", "network_cost", "complexity_loss", "block_cost",
    "architecture_snapshot",
]


@dataclass
class ArchMasks:
    """Per-block width masks (in/mid/out), one depth mask, per-block
    resolution masks, and the hard caps they are clipped against."""

    width: list            # [ (m_in, m_mid, m_out) ] per block
    depth: mk.MaskParams
    resolution: list       # one sigmoid mask per block (frequency axis)
    n_max_channels: int
    d_max: int

    def parameters(self):
        ps = []
        for trio in self.width:
            for m in trio:
                ps.extend(m.parameters())
        ps.extend(self.depth.parameters())
        for m in self.resolution:
            ps.extend(m.parameters())
        return ps

    def project(self):
        changed = False
        for trio in self.width:
            for m in trio:
                changed |= mk.project_bounds(m)
        changed |= mk.project_bounds(self.depth)
        for m in self.resolution:
            changed |= mk.project_bounds(m)
        return changed


def make_arch_masks(n_blocks, n_channels, signal_len, n_max_channels=None,
                    d_max=None, tau_channel=25.0, tau_depth=8.0,
                    tau_resolution=50.0):
    """Masks initialized to match the unmasked baseline architecture."""
    n_max_channels = n_max_channels or n_channels
    d_max = d_max or n_blocks
    width = []
    resolution = []
    for _ in range(n_blocks):
        trio = tuple(
            mk.sigmoid_mask(n_channels, x_min=0.0, x_max=float(n_channels - 1),
                            tau=tau_channel)
            for _ in range(3)
        )
        width.append(trio)
        resolution.append(
            mk.sigmoid_mask(signal_len // 2 + 1, x_min=0.0,
                            x_max=signal_len / 2.0, tau=tau_resolution)
        )
    depth = mk.sigmoid_mask(n_blocks, x_min=1.0, x_max=float(n_blocks),
                            tau=tau_depth)
    return ArchMasks(width=width, depth=depth, resolution=resolution,
                     n_max_channels=n_max_channels, d_max=d_max)


def width_mask_apply(features, m):
    """Scale channel c by the mask value at coordinate c.

    features [T, C] or [B, T, C]; channels past the mask boundary are
    exactly zero (hard threshold) and contribute no gradient.
    """
    features = ad.as_tensor(features)
    C = features.shape[-1]
    if C > m.n_init:
        raise ValueError(
            f"feature width {C} exceeds the mask axis {m.n_init}"
        )
    coords = np.arange(C, dtype=np.float64)
    vals = mk.mask_eval(m, coords)  # [C]
    shape = (1,) * (features.ndim - 1) + (C,)
    return ad.mul(features, ad.reshape(vals, shape))


def depth_mask_apply(residual, identity, depth_mask, block_index):
    """Block output = identity + m_depth(block index) * residual."""
    gate = mk.mask_eval(depth_mask, np.asarray(float(block_index)))
    return ad.add(identity, ad.mul(residual, gate))


def layer_cost(kind, sizes):
    """Differentiable operation count of one layer.

    kind "linear":    size(m_res) * size(m_in) * size(m_out)
    kind "fourier":   size(m_res) * log2(size(m_res))
    kind "pointwise": size(m_res) * size(m_in)
    `sizes` maps the names used above to differentiable scalars.
    """
    res = ad.as_tensor(sizes["res"])
    if kind == "linear":
        return ad.mul(ad.mul(res, ad.as_tensor(sizes["in"])),
                      ad.as_tensor(sizes["out"]))
    if kind == "fourier":
        log2 = ad.pointwise_scale(ad.log(res), 1.0 / np.log(2.0))
        return ad.mul(res, log2)
    if kind == "pointwise":
        return ad.mul(res, ad.as_tensor(sizes["in"]))
    raise ValueError(f"unknown layer kind: {kind!r}")


def _clipped_sizes(masks, block, signal_len):
    m_in, m_mid, m_out = masks.width[block]
    cap = float(masks.n_max_channels)
    s_in = mk.clip_size_straight_through(mk.mask_size_analytic(m_in), cap)
    s_mid = mk.clip_size_straight_through(mk.mask_size_analytic(m_mid), cap)
    s_out = mk.clip_size_straight_through(mk.mask_size_analytic(m_out), cap)
    # resolution mask counts frequency bins; time length is 2 (bins - 1)
    bins = mk.clip_size_straight_through(
        mk.mask_size_analytic(masks.resolution[block]),
        signal_len / 2.0 + 1.0,
    )
    s_res = ad.pointwise_scale(ad.sub(bins, 1.0), 2.0)
    return s_in, s_mid, s_out, s_res


def block_cost(masks, block, signal_len):
    """Cost of one residual block: conv + two pointwise stages.

    Fourier conv at the block resolution, a pointwise linear mixing
    mid -> out channels, and the pointwise ops (norm, nonlinearity) on
    the in channels.
    """
    s_in, s_mid, s_out, s_res = _clipped_sizes(masks, block, signal_len)
    conv = layer_cost("fourier", {"res": s_res})
    conv = ad.mul(conv, s_mid)  # one transform per active mid channel
    lin = layer_cost("linear", {"res": s_res, "in": s_mid, "out": s_out})
    point = layer_cost("pointwise", {"res": s_res, "in": s_in})
    return ad.add(ad.add(conv, lin), point)


def network_cost(masks, signal_len):
    """Total differentiable cost, blocks weighted by the effective depth.

    The depth-mask size d weights block l by clip(d - (l - 1), 0, 1):
    fully counted once d >= l, fractional while d crosses it, monotone
    and differentiable in d.
    """
    d = mk.clip_size_straight_through(
        mk.mask_size_analytic(masks.depth), float(masks.d_max)
    )
    total = None
    zero = ad.as_tensor(np.asarray(0.0))
    one = ad.as_tensor(np.asarray(1.0))
    for block in range(len(masks.width)):
        w = ad.minimum(ad.maximum(ad.sub(d, float(block)), zero), one)
        term = ad.mul(w, block_cost(masks, block, signal_len))
        total = term if total is None else ad.add(total, term)
    return total


def complexity_loss(c_curr, c_target):
    """|| C_curr / C_target - 1 ||^2 on the relative budget."""
    if float(ad.as_tensor(c_target).data) <= 0:
        raise ValueError("target complexity must be positive")
    ratio = ad.div(ad.as_tensor(c_curr), ad.as_tensor(c_target))
    return ad.square(ad.sub(ratio, 1.0))


def architecture_snapshot(masks, signal_len, kernel_masks=None):
    """JSON-ready view of the architecture the masks currently encode."""
    with ad.no_grad():
        blocks = []
        for i in range(len(masks.width)):
            m_in, m_mid, m_out = masks.width[i]
            bins = float(mk.mask_size_analytic(masks.resolution[i]).data)
            bins = min(bins, signal_len / 2.0 + 1.0)
            entry = {
                "block": i + 1,
                "width_in": round(
                    min(float(mk.mask_size_analytic(m_in).data),
                        masks.n_max_channels), 2),
                "width_mid": round(
                    min(float(mk.mask_size_analytic(m_mid).data),
                        masks.n_max_channels), 2),
                "width_out": round(
                    min(float(mk.mask_size_analytic(m_out).data),
                        masks.n_max_channels), 2),
                "resolution": round(2.0 * (bins - 1.0), 2),
                "depth_gate": round(
                    float(mk.mask_eval(masks.depth, np.asarray(float(i + 1))).data), 4),
            }
            if kernel_masks is not None:
                entry["kernel_size"] = round(
                    min(float(mk.mask_size_analytic(kernel_masks[i]).data),
                        kernel_masks[i].n_init + 1), 2)
            blocks.append(entry)
        active_depth = float(
            min(float(mk.mask_size_analytic(masks.depth).data), masks.d_max)
        )
    return {"blocks": blocks, "active_depth": round(active_depth, 3)}
