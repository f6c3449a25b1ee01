"""Real FFT primitives with complex values carried as a trailing [re, im] axis.

rfft/irfft are linear, so their vjps are exact adjoints: the duplicated
interior bins of the half spectrum pick up a factor 1/2 (rfft) or 2 (irfft).
`cmul_mix` fuses the complex product with the channel contraction used by
the Fourier convolution, keeping memory bounded.
"""

from __future__ import annotations

import numpy as np

from .tensor import as_tensor, record

__all__ = ["rfft", "irfft", "cmul_mix", "cmul", "next_pow2"]


def next_pow2(n):
    p = 1
    while p < n:
        p *= 2
    return p


def _interior_slice(n, nbins):
    """Bins duplicated by the hermitian extension of a length-n rfft."""
    last = n // 2 if n % 2 == 0 else (n - 1) // 2 + 1
    return slice(1, min(last, nbins))


def _to_complex(pairs):
    return pairs[..., 0] + 1j * pairs[..., 1]


def _to_pairs(z):
    return np.stack([z.real, z.imag], axis=-1)


def rfft(a, n, axis):
    """Real FFT of length n along `axis`; output gains a trailing pair axis."""
    a = as_tensor(a)
    ax = axis % a.data.ndim
    in_len = a.data.shape[ax]
    if n < in_len:
        raise ValueError(f"rfft length {n} shorter than input {in_len}")
    z = np.fft.rfft(a.data, n=n, axis=ax)
    out = _to_pairs(z)

    def vjp(g):
        gc = _to_complex(np.asarray(g, dtype=np.float64))
        sl = [slice(None)] * gc.ndim
        sl[ax] = _interior_slice(n, gc.shape[ax])
        gc = gc.copy()
        gc[tuple(sl)] *= 0.5
        gx = n * np.fft.irfft(gc, n=n, axis=ax)
        take = [slice(None)] * gx.ndim
        take[ax] = slice(0, in_len)
        return (gx[tuple(take)].astype(a.data.dtype, copy=False),)

    return record((a,), out, vjp)


def irfft(a, n, axis):
    """Inverse real FFT; input carries a trailing pair axis, output is real."""
    a = as_tensor(a)
    z = _to_complex(a.data)
    ax = axis % z.ndim
    nbins = z.shape[ax]
    if nbins > n // 2 + 1:
        raise ValueError(f"irfft got {nbins} bins for output length {n}")
    out = np.fft.irfft(z, n=n, axis=ax)

    def vjp(g):
        G = np.fft.rfft(np.asarray(g, dtype=np.float64), n=n, axis=ax) / n
        sl = [slice(None)] * G.ndim
        sl[ax] = _interior_slice(n, G.shape[ax])
        G[tuple(sl)] *= 2.0
        take = [slice(None)] * G.ndim
        take[ax] = slice(0, nbins)
        return (_to_pairs(G[tuple(take)]).astype(a.data.dtype, copy=False),)

    return record((a,), out, vjp)


def cmul_mix(x_pairs, k_pairs):
    """Frequency-domain channel mix: [B,F,Ci,2] x [F,Co,Ci,2] -> [B,F,Co,2].

    Computes Y[b,f,o] = sum_c X[b,f,c] * K[f,o,c] over complex values.
    """
    x_pairs, k_pairs = as_tensor(x_pairs), as_tensor(k_pairs)
    X = _to_complex(x_pairs.data)
    K = _to_complex(k_pairs.data)
    Y = np.einsum("bfc,foc->bfo", X, K, optimize=True)

    def vjp(g):
        G = _to_complex(np.asarray(g))
        gx = np.einsum("bfo,foc->bfc", G, K.conj(), optimize=True)
        gk = np.einsum("bfo,bfc->foc", G, X.conj(), optimize=True)
        return _to_pairs(gx), _to_pairs(gk)

    return record((x_pairs, k_pairs), _to_pairs(Y), vjp)


def cmul(a_pairs, b_pairs):
    """Elementwise complex product of pair tensors (broadcasting allowed)."""
    a_pairs, b_pairs = as_tensor(a_pairs), as_tensor(b_pairs)
    A = _to_complex(a_pairs.data)
    B = _to_complex(b_pairs.data)
    Y = A * B

    def vjp(g):
        G = _to_complex(np.asarray(g))
        ga = _to_pairs(G * B.conj())
        gb = _to_pairs(G * A.conj())

        def unb(grad, shape):
            extra = grad.ndim - len(shape)
            if extra > 0:
                grad = grad.sum(axis=tuple(range(extra)))
            axes = tuple(
                i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1
            )
            if axes:
                grad = grad.sum(axis=axes, keepdims=True)
            return grad.reshape(shape)

        return unb(ga, a_pairs.data.shape), unb(gb, b_pairs.data.shape)

    return record((a_pairs, b_pairs), _to_pairs(Y), vjp)
