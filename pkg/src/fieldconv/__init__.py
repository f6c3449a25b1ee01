"""fieldconv: continuous-kernel convolutions with neural-field kernels.

Kernels are generated by small coordinate networks (sine MLPs, anisotropic
Gabor nets, Fourier-feature and piecewise MLPs), optionally shaped by
differentiable Gaussian/sigmoid masks that make kernel size, channel
width, depth, and internal resolution learnable. Closed-form frequency
analysis keeps generated kernels below the sampling grid's Nyquist limit,
and a small experiment harness reproduces the toy benchmarks.
"""

__version__ = "0.1.0"
