"""Neural-field kernel generators.

A kernel field maps normalized relative positions in [-1, 1]^D to an
N_out x N_in block of kernel values. Four parameterizations are provided:

  SineMLP        sine nonlinearities with a frequency prior omega_0
  MAGNet         multiplicative network of anisotropic Gabor bases
  FourierFeature fixed random sin/cos encoding followed by an MLP
  PiecewiseMLP   plain relu/swish MLP baseline

Fields are immutable for evaluation; parameter updates require exclusive
access. Parameters serialize to a flat name -> array mapping, round-trip
exact at float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "KernelField", "SineMLP", "MAGNet", "FourierFeature", "PiecewiseMLP",
    "CoordGrid", "coord_grid", "siren_new", "magnet_new", "fourier_new",
    "piecewise_new", "rescale_output_variance", "eval_field",
    "state_dict", "load_state_dict", "save_npz", "load_npz",
]


class ConfigurationError(ValueError):
    """Raised when a constructor argument violates its contract."""


# ---------------------------------------------------------------------------
# coordinate grids


@dataclass
class CoordGrid:
    """Evaluation grid over [-1, 1]^D.

    `axes` holds the per-axis 1-d coordinates; `points` the flattened
    Cartesian product, shape [prod(lengths), D].
    """

    dims: int
    mode: str
    axes: list = dc_field(default_factory=list)
    points: np.ndarray = None

    def __len__(self):
        return self.points.shape[0]


def _axis_coords(n):
    if n == 1:
        return np.zeros(1)
    return np.linspace(-1.0, 1.0, n)


def coord_grid(n, dims=1, mode="causal"):
    """Uniform grid of n points per axis on [-1, 1]^dims."""
    if n < 1:
        raise ConfigurationError(f"grid length must be >= 1, got {n}")
    if mode not in ("causal", "centered"):
        raise ConfigurationError(f"unknown grid mode: {mode!r}")
    axes = [_axis_coords(n) for _ in range(dims)]
    if dims == 1:
        points = axes[0][:, None]
    elif dims == 2:
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
        points = np.stack([xx.reshape(-1), yy.reshape(-1)], axis=1)
    else:
        raise ConfigurationError(f"only 1-d and 2-d grids supported, got {dims}")
    return CoordGrid(dims=dims, mode=mode, axes=axes, points=points)


# ---------------------------------------------------------------------------
# field base


class KernelField:
    variant = "base"

    def __init__(self, depth, n_hid, in_dim, n_out, n_in):
        self.depth = depth
        self.n_hid = n_hid
        self.in_dim = in_dim
        self.n_out = n_out
        self.n_in = n_in
        self.params = {}

    def parameters(self):
        return list(self.params.values())

    def named_parameters(self):
        return list(self.params.items())

    def _add(self, name, array, requires_grad=True):
        t = Tensor(np.asarray(array, dtype=np.float64), requires_grad=requires_grad)
        self.params[name] = t
        return t

    def forward(self, coords):
        raise NotImplementedError

    def __call__(self, coords):
        if isinstance(coords, CoordGrid):
            if coords.dims != self.in_dim:
                raise ValueError(
                    f"grid dims {coords.dims} != field input dim {self.in_dim}"
                )
            coords = coords.points
        coords = ad.as_tensor(np.atleast_2d(np.asarray(coords, dtype=np.float64)))
        if coords.shape[1] != self.in_dim:
            raise ValueError(
                f"coordinates have dim {coords.shape[1]}, field expects {self.in_dim}"
            )
        flat = self.forward(coords)  # [P, n_out * n_in]
        return ad.reshape(flat, (coords.shape[0], self.n_out, self.n_in))

    def project_parameters(self):
        """Clamp parameters back into their invariant region (no-op here)."""
        return False


def eval_field(field, grid):
    """Evaluate a field on a grid -> Tensor [len(grid), N_out, N_in]."""
    return field(grid)


# ---------------------------------------------------------------------------
# sine-MLP fields


class SineMLP(KernelField):
    """MLP with sin(omega_0 (Wx + b)) hidden layers.

    First-layer weights are uniform(-1/D, 1/D); deeper layers uniform
    (-sqrt(6/N_hid)/omega_0, +sqrt(6/N_hid)/omega_0). Biases are drawn
    uniformly across one period of each unit: |b_i| <= pi / ||W_i||.
    """

    variant = "SineMLP"

    def __init__(self, depth, n_hid, in_dim, n_out, n_in, omega0=30.0,
                 seed=0, weight_norm=False):
        if depth < 2:
            raise ConfigurationError(f"SineMLP needs depth >= 2, got {depth}")
        if omega0 <= 0:
            raise ConfigurationError(f"omega0 must be positive, got {omega0}")
        super().__init__(depth, n_hid, in_dim, n_out, n_in)
        self.omega0 = float(omega0)
        self.weight_norm = bool(weight_norm)
        rng = np.random.default_rng(seed)
        dims = [in_dim] + [n_hid] * (depth - 1) + [n_out * n_in]
        for layer in range(depth):
            fan_in, fan_out = dims[layer], dims[layer + 1]
            if layer == 0:
                bound = 1.0 / in_dim
            else:
                bound = math.sqrt(6.0 / fan_in) / self.omega0
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            row_norm = np.maximum(np.linalg.norm(w, axis=1), 1e-12)
            if layer < depth - 1:
                b = rng.uniform(-np.pi / row_norm, np.pi / row_norm)
            else:
                b = np.zeros(fan_out)
            if self.weight_norm:
                self._add(f"v{layer}", w / row_norm[:, None])
                self._add(f"g{layer}", row_norm)
            else:
                self._add(f"w{layer}", w)
            self._add(f"b{layer}", b)

    def _weight(self, layer):
        if self.weight_norm:
            v = self.params[f"v{layer}"]
            g = self.params[f"g{layer}"]
            norm = ad.sqrt(ad.sum_(ad.square(v), axis=1, keepdims=True))
            return ad.mul(ad.div(v, norm), ad.reshape(g, (-1, 1)))
        return self.params[f"w{layer}"]

    def forward(self, coords):
        h = coords
        for layer in range(self.depth):
            w = self._weight(layer)
            b = self.params[f"b{layer}"]
            z = ad.add(ad.matmul(h, ad.transpose(w)), b)
            if layer < self.depth - 1:
                h = ad.sin(ad.pointwise_scale(z, self.omega0))
            else:
                h = z
        return h


def siren_new(depth, n_hid, in_dim, n_out, n_in, omega0=30.0, seed=0,
              weight_norm=False):
    return SineMLP(depth, n_hid, in_dim, n_out, n_in, omega0=omega0,
                   seed=seed, weight_norm=weight_norm)


# ---------------------------------------------------------------------------
# multiplicative anisotropic Gabor fields


class MAGNet(KernelField):
    """Multiplicative network with anisotropic Gabor bases.

    g_l(x) = exp(-1/2 sum_d (gamma_d (x_d - mu_d))^2) * sin(W_g x + b_g)
    h_1 = g_1,  h_l = (W_l h_{l-1} + b_l) * g_l,  out = W_L h_{L-1} + b_L.

    `depth` counts linear maps: a 3-layer net has two Gabor banks.
    Envelope scales gamma at Gabor bank l are drawn
    from Gamma(shape alpha/l, rate beta); sine frequencies reuse the same
    draw, scaled by 25.6 * sqrt(gamma) per axis; sine phases are
    uniform(-pi, pi).
    """

    variant = "MAGNet"
    AXES = ("x", "y")

    def __init__(self, depth, n_hid, in_dim, n_out, n_in, alpha=6.0,
                 beta=1.0, seed=0, gamma_floor=1e-3):
        if depth < 2:
            raise ConfigurationError(f"MAGNet needs depth >= 2, got {depth}")
        if alpha <= 0 or beta <= 0:
            raise ConfigurationError(
                f"Gamma parameters must be positive, got alpha={alpha}, beta={beta}"
            )
        super().__init__(depth, n_hid, in_dim, n_out, n_in)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.gamma_floor = float(gamma_floor)
        self.n_gabor = depth - 1
        rng = np.random.default_rng(seed)
        for l in range(1, self.n_gabor + 1):
            shape = self.alpha / l
            gammas = []
            for d in range(in_dim):
                g = rng.gamma(shape, 1.0 / self.beta, size=n_hid)
                gammas.append(g)
                self._add(f"gamma_{self.AXES[d]}{l}", g)
                self._add(f"mu_{self.AXES[d]}{l}", rng.uniform(-1, 1, size=n_hid))
            wg = rng.uniform(-1.0, 1.0, size=(n_hid, in_dim)) / math.sqrt(in_dim)
            for d in range(in_dim):
                wg[:, d] *= 25.6 * np.sqrt(gammas[d])
            self._add(f"wg{l}", wg)
            self._add(f"bg{l}", rng.uniform(-np.pi, np.pi, size=n_hid))
        bound = math.sqrt(1.0 / n_hid)
        for l in range(2, depth + 1):
            fan_out = n_hid if l < depth else n_out * n_in
            self._add(f"w{l}", rng.uniform(-bound, bound, size=(fan_out, n_hid)))
            self._add(f"b{l}", rng.uniform(-bound, bound, size=fan_out))

    def gabor(self, coords, l):
        """Anisotropic Gabor bank l evaluated at coords [P, D] -> [P, N_hid]."""
        quad = None
        for d in range(self.in_dim):
            x_d = ad.slice_(coords, (slice(None), slice(d, d + 1)))  # [P, 1]
            gamma = self.params[f"gamma_{self.AXES[d]}{l}"]
            mu = self.params[f"mu_{self.AXES[d]}{l}"]
            term = ad.square(ad.mul(gamma, ad.sub(x_d, mu)))  # [P, N_hid]
            quad = term if quad is None else ad.add(quad, term)
        env = ad.exp(ad.pointwise_scale(quad, -0.5))
        sine = ad.sin(
            ad.add(
                ad.matmul(coords, ad.transpose(self.params[f"wg{l}"])),
                self.params[f"bg{l}"],
            )
        )
        return ad.mul(env, sine)

    def forward(self, coords):
        h = self.gabor(coords, 1)
        for l in range(2, self.depth):
            lin = ad.add(
                ad.matmul(h, ad.transpose(self.params[f"w{l}"])),
                self.params[f"b{l}"],
            )
            h = ad.mul(lin, self.gabor(coords, l))
        L = self.depth
        return ad.add(
            ad.matmul(h, ad.transpose(self.params[f"w{L}"])), self.params[f"b{L}"]
        )

    def gamma_tensors(self, l):
        """Per-axis envelope scales of Gabor bank l."""
        return [
            self.params[f"gamma_{self.AXES[d]}{l}"] for d in range(self.in_dim)
        ]

    def project_parameters(self):
        """Keep envelope scales strictly positive after optimizer steps."""
        changed = False
        for l in range(1, self.n_gabor + 1):
            for d in range(self.in_dim):
                g = self.params[f"gamma_{self.AXES[d]}{l}"].data
                bad = g < self.gamma_floor
                if bad.any():
                    g[bad] = self.gamma_floor
                    changed = True
        return changed


def magnet_new(depth, n_hid, in_dim, n_out, n_in, alpha=6.0, beta=1.0, seed=0):
    return MAGNet(depth, n_hid, in_dim, n_out, n_in, alpha=alpha, beta=beta,
                  seed=seed)


# ---------------------------------------------------------------------------
# Fourier-feature fields


class FourierFeature(KernelField):
    """Fixed random sin/cos encoding followed by an MLP.

    Encoding frequencies are drawn once at construction and are not
    learnable.
    """

    variant = "FourierFeature"

    def __init__(self, depth, n_hid, in_dim, n_out, n_in, omega0=10.0,
                 n_freq=None, seed=0):
        if depth < 2:
            raise ConfigurationError(f"FourierFeature needs depth >= 2, got {depth}")
        super().__init__(depth, n_hid, in_dim, n_out, n_in)
        self.omega0 = float(omega0)
        rng = np.random.default_rng(seed)
        n_freq = n_freq or n_hid // 2
        self.freqs = rng.normal(size=(n_freq, in_dim))  # fixed, not learned
        dims = [2 * n_freq] + [n_hid] * (depth - 1) + [n_out * n_in]
        for layer in range(depth):
            fan_in, fan_out = dims[layer], dims[layer + 1]
            bound = math.sqrt(2.0 / fan_in)
            self._add(f"w{layer}", rng.normal(size=(fan_out, fan_in)) * bound)
            self._add(f"b{layer}", np.zeros(fan_out))

    def forward(self, coords):
        proj = ad.pointwise_scale(
            ad.matmul(coords, ad.as_tensor(self.freqs.T)),
            2.0 * np.pi * self.omega0,
        )
        h = ad.concat([ad.cos(proj), ad.sin(proj)], axis=1)
        for layer in range(self.depth):
            w = self.params[f"w{layer}"]
            b = self.params[f"b{layer}"]
            h = ad.add(ad.matmul(h, ad.transpose(w)), b)
            if layer < self.depth - 1:
                h = ad.relu(h)
        return h


def fourier_new(depth, n_hid, in_dim, n_out, n_in, omega0=10.0, seed=0):
    return FourierFeature(depth, n_hid, in_dim, n_out, n_in, omega0=omega0,
                          seed=seed)


# ---------------------------------------------------------------------------
# piecewise-MLP baseline fields


class PiecewiseMLP(KernelField):
    """Plain MLP baseline with relu or swish nonlinearities."""

    variant = "PiecewiseMLP"

    def __init__(self, depth, n_hid, in_dim, n_out, n_in, nonlinearity="relu",
                 seed=0):
        if depth < 2:
            raise ConfigurationError(f"PiecewiseMLP needs depth >= 2, got {depth}")
        if nonlinearity not in ("relu", "swish"):
            raise ConfigurationError(f"unsupported nonlinearity: {nonlinearity!r}")
        super().__init__(depth, n_hid, in_dim, n_out, n_in)
        self.nonlinearity = nonlinearity
        rng = np.random.default_rng(seed)
        dims = [in_dim] + [n_hid] * (depth - 1) + [n_out * n_in]
        for layer in range(depth):
            fan_in, fan_out = dims[layer], dims[layer + 1]
            self._add(
                f"w{layer}",
                rng.normal(size=(fan_out, fan_in)) * math.sqrt(2.0 / fan_in),
            )
            self._add(f"b{layer}", np.zeros(fan_out))

    def forward(self, coords):
        act = ad.relu if self.nonlinearity == "relu" else ad.swish
        h = coords
        for layer in range(self.depth):
            h = ad.add(
                ad.matmul(h, ad.transpose(self.params[f"w{layer}"])),
                self.params[f"b{layer}"],
            )
            if layer < self.depth - 1:
                h = act(h)
        return h


def piecewise_new(depth, n_hid, in_dim, n_out, n_in, nonlinearity="relu", seed=0):
    return PiecewiseMLP(depth, n_hid, in_dim, n_out, n_in,
                        nonlinearity=nonlinearity, seed=seed)


# ---------------------------------------------------------------------------
# output-variance rescaling


def rescale_output_variance(field, n_in, kernel_size, gain=1.0):
    """Scale the field's last linear layer by gain^2 / sqrt(n_in * K).

    Keeps generated-kernel variance inversely proportional to the fan-in
    of the convolution it parameterizes. Applied once at construction by
    the caller; the factor is taken literally (see package notes), so the
    caller controls `gain`.
    """
    if kernel_size < 1:
        raise ConfigurationError(f"kernel_size must be >= 1, got {kernel_size}")
    if n_in < 1:
        raise ConfigurationError(f"n_in must be >= 1, got {n_in}")
    factor = gain * gain / math.sqrt(n_in * kernel_size)
    last = field.depth if field.variant == "MAGNet" else field.depth - 1
    if field.variant == "SineMLP" and field.weight_norm:
        field.params[f"g{last}"].data *= factor
    else:
        field.params[f"w{last}"].data *= factor
    field.params[f"b{last}"].data *= factor
    return field


# ---------------------------------------------------------------------------
# serialization: flat name -> array mapping, exact at float64


def state_dict(field):
    return {name: t.data.copy() for name, t in field.params.items()}


def load_state_dict(field, state):
    for name, t in field.params.items():
        if name not in state:
            raise KeyError(f"missing parameter {name!r} in state")
        arr = np.asarray(state[name])
        if arr.shape != t.data.shape:
            raise ValueError(
                f"parameter {name!r} has shape {arr.shape}, expected {t.data.shape}"
            )
        t.data = arr.astype(t.data.dtype, copy=True)
    return field


def save_npz(field, path):
    np.savez(path, **state_dict(field))


def load_npz(field, path):
    with np.load(path) as data:
        return load_state_dict(field, dict(data))
