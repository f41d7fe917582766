"""Parameter-update rules shared by the offline training loops."""

from __future__ import annotations

from typing import Mapping

import numpy as np


def step_lr(base: float, iteration: int, milestones: Mapping[int, float]) -> float:
    """Piecewise-constant learning rate: multiply by ``factor`` from each milestone on."""
    lr = base
    for at, factor in sorted(milestones.items()):
        if iteration >= at:
            lr *= factor
    return lr


class Adam:
    """Adaptive-moment descent over a dict of named arrays."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def update(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray], lr: float) -> dict[str, np.ndarray]:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        out = dict(params)
        for name, g in grads.items():
            m = self.m.get(name, np.zeros_like(g))
            v = self.v.get(name, np.zeros_like(g))
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            self.m[name], self.v[name] = m, v
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            out[name] = params[name] - lr * mhat / (np.sqrt(vhat) + self.eps)
        return out


def sgd_update(params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray], lr: float) -> dict[str, np.ndarray]:
    out = dict(params)
    for name, g in grads.items():
        out[name] = params[name] - lr * g
    return out
