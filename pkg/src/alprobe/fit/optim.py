"""Minimal Adam with independent parameter groups."""

from __future__ import annotations

import numpy as np


class Adam:
    """Moment-based first-order steps; one learning rate per group."""

    def __init__(self, lr: dict[str, float], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = dict(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Return the update to subtract for each group."""
        self.t += 1
        out = {}
        for name, g in grads.items():
            g = np.asarray(g, dtype=np.float64)
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            out[name] = self.lr[name] * m_hat / (np.sqrt(v_hat) + self.eps)
        return out
