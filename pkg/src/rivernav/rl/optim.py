"""Adam on a flat parameter vector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


def adam_step(params, grads, m, v, t: int, cfg: AdamConfig):
    """One bias-corrected Adam update at step ``t`` (1-based).

    Returns new ``(params, m, v)``; inputs are not modified.
    """
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    m = cfg.beta1 * m + (1 - cfg.beta1) * grads
    v = cfg.beta2 * v + (1 - cfg.beta2) * grads * grads
    m_hat = m / (1 - cfg.beta1**t)
    v_hat = v / (1 - cfg.beta2**t)
    return params - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps), m, v


class Adam:
    """Stateful wrapper that updates a parameter array in place."""

    def __init__(self, size: int, cfg: AdamConfig = AdamConfig()):
        self.cfg = cfg
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grads: np.ndarray) -> None:
        self.t += 1
        new, self.m, self.v = adam_step(params, grads, self.m, self.v, self.t, self.cfg)
        params[...] = new
