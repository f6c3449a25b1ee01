"""Independent reference implementations used only by the test suite.

These deliberately avoid the production code paths (no stride tricks,
no FFT): outputs are assembled index by index from the definition.
"""

import numpy as np


def conv_reference(x, kernel, mode="causal"):
    """O(T*k) definition-level convolution.

    x [T, C_in], kernel [k, C_out, C_in]; out[t, o] = sum over lag j and
    channel c of kernel[j, o, c] * x[t - lag_j, c] with zero padding,
    lag_j = j (causal) or j - k//2 (centered).
    """
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    T = x.shape[0]
    k, n_out, _ = kernel.shape
    shift = 0 if mode == "causal" else k // 2
    out = np.zeros((T, n_out))
    for t in range(T):
        acc = np.zeros(n_out)
        for j in range(k):
            src = t - j + shift
            if 0 <= src < T:
                acc += kernel[j] @ x[src]
        out[t] = acc
    return out


def dwconv_reference(x, kernel, mode="causal"):
    """Depthwise counterpart of conv_reference; kernel [k, C]."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    T, C = x.shape
    k = kernel.shape[0]
    shift = 0 if mode == "causal" else k // 2
    out = np.zeros((T, C))
    for t in range(T):
        for j in range(k):
            src = t - j + shift
            if 0 <= src < T:
                out[t] += kernel[j] * x[src]
    return out
