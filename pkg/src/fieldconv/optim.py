"""Adam optimizer with parameter groups and post-step projections."""

from __future__ import annotations

import numpy as np

__all__ = ["Adam"]


class Adam:
    """Adam over explicit parameter groups.

    groups: list of dicts {"params": [Tensor, ...], "lr": float}. A
    projection callable (e.g. mask-bound clamping) runs after each step;
    it must be a no-op for parameters already inside their bounds.
    """

    def __init__(self, groups, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 projections=()):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.groups = []
        for g in groups:
            params = list(g["params"])
            self.groups.append({"params": params, "lr": g.get("lr", lr)})
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.projections = list(projections)
        self._m = {}
        self._v = {}
        for g in self.groups:
            for p in g["params"]:
                p.requires_grad = True
                self._m[id(p)] = np.zeros_like(p.data)
                self._v[id(p)] = np.zeros_like(p.data)

    def parameters(self):
        return [p for g in self.groups for p in g["params"]]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for g in self.groups:
            lr = g["lr"]
            for p in g["params"]:
                if p.grad is None:
                    continue
                grad = p.grad
                m = self._m[id(p)]
                v = self._v[id(p)]
                m += (1.0 - b1) * (grad - m)
                v += (1.0 - b2) * (grad * grad - v)
                update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
                p.data = p.data - lr * update
        for proj in self.projections:
            proj()
