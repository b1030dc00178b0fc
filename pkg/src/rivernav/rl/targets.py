"""Regression targets: the max-based DQN target and the kernel-test target."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

DENOM_FLOOR = 1e-8


def dqn_target(rewards, dones, q_next, gamma: float) -> np.ndarray:
    """``r + gamma * max_a Q(s', a)`` with the bootstrap dropped on terminal steps.

    ``q_next`` is ``(N, A)``.
    """
    q_next = np.asarray(q_next, dtype=float)
    boot = np.where(np.asarray(dones, bool), 0.0, q_next.max(axis=-1))
    return np.asarray(rewards, dtype=float) + gamma * boot


def keb_statistic(q, var) -> np.ndarray:
    """Standardized gap of every action to the greedy one; rows along the last axis."""
    q = np.asarray(q, dtype=float)
    var = np.asarray(var, dtype=float)
    star = np.argmax(q, axis=-1)[..., None]
    q_star = np.take_along_axis(q, star, axis=-1)
    var_star = np.take_along_axis(np.broadcast_to(var, q.shape), star, axis=-1)
    denom = np.maximum(np.sqrt(var + var_star), DENOM_FLOOR)
    return (q - q_star) / denom


def keb_weights(q, var, kernel=ndtr) -> np.ndarray:
    """Kernel weights over actions, normalized to sum to one."""
    k = kernel(keb_statistic(q, var))
    return k / k.sum(axis=-1, keepdims=True)


def ensemble_variance(q_heads) -> np.ndarray:
    """Sample variance across heads (axis 0); zero for a single head."""
    q_heads = np.asarray(q_heads, dtype=float)
    if q_heads.shape[0] < 2:
        return np.zeros(q_heads.shape[1:])
    return q_heads.var(axis=0, ddof=1)


def keb_target(rewards, dones, q_next_heads, gamma: float, var=None, kernel=ndtr) -> np.ndarray:
    """Per-head targets ``(N, B)`` from target-network values ``(B, N, A)``.

    Each head's bootstrap is its own kernel-weighted action average; the
    variance defaults to the spread across heads and is shared by all heads.
    """
    q = np.asarray(q_next_heads, dtype=float)
    if var is None:
        var = ensemble_variance(q)
    w = keb_weights(q, np.broadcast_to(var, q.shape), kernel)
    boot = (w * q).sum(axis=-1).T  # (N, B)
    boot = np.where(np.asarray(dones, bool)[:, None], 0.0, boot)
    return np.asarray(rewards, dtype=float)[:, None] + gamma * boot
