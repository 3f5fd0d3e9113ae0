"""AdamW with decoupled weight decay and a warmup-free cosine schedule."""

from __future__ import annotations

import math

import numpy as np


class AdamW:
    def __init__(self, params, weight_decay: float = 5e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.weight_decay = weight_decay
        self.betas = tuple(betas)
        self.eps = eps
        self.t = 0
        self.m = [np.zeros(p.value.shape, dtype=np.float64) for p in self.params]
        self.v = [np.zeros(p.value.shape, dtype=np.float64) for p in self.params]

    def step(self, lr: float):
        """``p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)``."""
        self.t += 1
        b1, b2 = self.betas
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            t = p.tensor if hasattr(p, "tensor") else p
            g = np.zeros(t.value.shape) if t.grad is None else t.grad.astype(np.float64)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps) + self.weight_decay * t.value
            t.value = (t.value - lr * update).astype(t.value.dtype)


def adamw_step(opt: AdamW, lr: float) -> None:
    opt.step(lr)


def cosine_lr(step: int, total: int, lr_max: float) -> float:
    if total <= 0:
        return lr_max
    return lr_max * 0.5 * (1 + math.cos(math.pi * step / total))
