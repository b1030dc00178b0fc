"""Fixed-capacity FIFO replay memory with per-head bootstrap masks."""

from __future__ import annotations

import numpy as np


def draw_mask(rng: np.random.Generator, n_heads: int, p: float) -> np.ndarray:
    """Bernoulli(p) inclusion per head, redrawn until at least one head is active."""
    if not 0 < p <= 1:
        raise ValueError("mask probability must lie in (0, 1]")
    while True:
        mask = rng.random(n_heads) < p
        if mask.any():
            return mask


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, n_heads: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.masks = np.zeros((capacity, n_heads), dtype=bool)
        self.size = 0
        self._next = 0

    def __len__(self) -> int:
        return self.size

    def add(self, obs, action: int, reward: float, next_obs, done: bool, mask) -> None:
        k = self._next
        self.obs[k] = obs
        self.actions[k] = action
        self.rewards[k] = reward
        self.next_obs[k] = next_obs
        self.dones[k] = done
        self.masks[k] = mask
        self._next = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        if batch > self.size:
            raise ValueError(f"cannot draw {batch} distinct items from {self.size}")
        return rng.choice(self.size, size=batch, replace=False)

    def sample(self, batch: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        idx = self.sample_indices(batch, rng)
        return {
            "obs": self.obs[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_obs": self.next_obs[idx],
            "dones": self.dones[idx],
            "masks": self.masks[idx],
        }
