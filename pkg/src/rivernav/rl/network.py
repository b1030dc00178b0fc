"""Bootstrapped Q-network: a shared rectifier core feeding B independent heads.

All parameters live in one flat float64 vector; per-layer weights and biases
are views into it, so the optimizer and checkpointing only ever see the flat
array.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class BootstrappedNet:
    """``core_sizes`` runs input -> shared features, ``head_sizes`` runs
    features -> actions for each of ``n_heads`` heads.

    Core layers are all followed by a rectifier; head layers are too, except
    the last, which is linear.
    """

    def __init__(self, core_sizes, head_sizes, n_heads: int, params: np.ndarray | None = None):
        core_sizes, head_sizes = [int(v) for v in core_sizes], [int(v) for v in head_sizes]
        if len(core_sizes) < 1 or len(head_sizes) < 2:
            raise ShapeError("core needs an input size and heads need at least one layer")
        if core_sizes[-1] != head_sizes[0]:
            raise ShapeError(f"core output {core_sizes[-1]} does not match head input {head_sizes[0]}")
        if n_heads < 1:
            raise ShapeError("at least one head is required")
        self.core_sizes = core_sizes
        self.head_sizes = head_sizes
        self.n_heads = int(n_heads)
        self._layout = []  # (kind, layer index, W shape, b shape)
        for k in range(len(core_sizes) - 1):
            self._layout.append(("core", k, (core_sizes[k], core_sizes[k + 1]), (core_sizes[k + 1],)))
        for k in range(len(head_sizes) - 1):
            B = self.n_heads
            self._layout.append(("head", k, (B, head_sizes[k], head_sizes[k + 1]), (B, head_sizes[k + 1])))
        self.size = sum(int(np.prod(w)) + int(np.prod(b)) for _, _, w, b in self._layout)
        if params is None:
            params = np.zeros(self.size)
        self.params = np.asarray(params, dtype=np.float64)
        if self.params.shape != (self.size,):
            raise ShapeError(f"expected {self.size} parameters, got {self.params.shape}")
        self.core, self.heads = self.views(self.params)

    @property
    def input_dim(self) -> int:
        return self.core_sizes[0]

    @property
    def n_actions(self) -> int:
        return self.head_sizes[-1]

    def views(self, flat: np.ndarray):
        """Split a flat vector into ``(core, heads)`` lists of ``(W, b)`` views."""
        core, heads, off = [], [], 0
        for kind, _, wshape, bshape in self._layout:
            nw, nb = int(np.prod(wshape)), int(np.prod(bshape))
            W = flat[off : off + nw].reshape(wshape)
            b = flat[off + nw : off + nw + nb].reshape(bshape)
            off += nw + nb
            (core if kind == "core" else heads).append((W, b))
        return core, heads

    def sizes(self) -> dict:
        return {"core": self.core_sizes, "head": self.head_sizes, "n_heads": self.n_heads}

    def clone(self) -> "BootstrappedNet":
        return BootstrappedNet(self.core_sizes, self.head_sizes, self.n_heads, self.params.copy())

    def initialize(self, seed) -> "BootstrappedNet":
        """Uniform(+-1/sqrt(fan_in)) for weights and biases; every head draws from its own stream."""
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        core_ss, *head_ss = ss.spawn(1 + self.n_heads)
        rng = np.random.default_rng(core_ss)
        for W, b in self.core:
            lim = 1.0 / np.sqrt(W.shape[0])
            W[...] = rng.uniform(-lim, lim, W.shape)
            b[...] = rng.uniform(-lim, lim, b.shape)
        for h, ss in enumerate(head_ss):
            rng = np.random.default_rng(ss)
            for W, b in self.heads:
                lim = 1.0 / np.sqrt(W.shape[1])
                W[h] = rng.uniform(-lim, lim, W.shape[1:])
                b[h] = rng.uniform(-lim, lim, b.shape[1:])
        return self

    def _check(self, obs) -> np.ndarray:
        x = np.asarray(obs, dtype=np.float64)
        if x.ndim not in (1, 2) or x.shape[-1] != self.input_dim:
            raise ShapeError(f"observation shape {x.shape} does not end in {self.input_dim}")
        return x

    def forward(self, obs, cache: bool = False):
        """Q-values ``(B, A)`` for one observation or ``(B, N, A)`` for a batch."""
        x = self._check(obs)
        single = x.ndim == 1
        h = x[None, :] if single else x
        acts = [h]
        for W, b in self.core:
            h = np.maximum(h @ W + b, 0.0)
            acts.append(h)
        a = np.broadcast_to(h, (self.n_heads,) + h.shape)
        head_acts = [a]
        last = len(self.heads) - 1
        for k, (W, b) in enumerate(self.heads):
            z = np.matmul(a, W) + b[:, None, :]
            a = z if k == last else np.maximum(z, 0.0)
            head_acts.append(a)
        q = a[:, 0, :] if single else a
        if cache:
            return q, (acts, head_acts)
        return q

    def loss_and_grad(self, obs, actions, targets, mask):
        """Masked squared error on the taken actions and its gradient.

        ``loss = sum(mask * (Q_b(s_n, a_n) - y_{n,b})**2) / n_active``; a
        transition masked out for head b contributes nothing to that head.
        """
        x = self._check(obs)
        if x.ndim != 2:
            raise ShapeError("loss_and_grad needs a batch of observations")
        N = x.shape[0]
        actions = np.asarray(actions, dtype=np.int64)
        targets = np.asarray(targets, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        if targets.shape != (N, self.n_heads) or mask.shape != (N, self.n_heads) or actions.shape != (N,):
            raise ShapeError("targets and mask must be (batch, heads); actions (batch,)")
        grad = np.zeros(self.size)
        n_active = int(mask.sum())
        if n_active == 0:
            return 0.0, grad
        q, (acts, head_acts) = self.forward(x, cache=True)
        rows = np.arange(N)
        qa = q[:, rows, actions].T  # (N, B)
        err = np.where(mask, qa - targets, 0.0)
        loss = float((err**2).sum() / n_active)

        g_core, g_heads = self.views(grad)
        dz = np.zeros_like(q)
        dz[:, rows, actions] = (2.0 / n_active) * err.T
        last = len(self.heads) - 1
        for k in range(last, -1, -1):
            W, _ = self.heads[k]
            a_in = head_acts[k]
            if k != last:
                dz = dz * (head_acts[k + 1] > 0)
            gW, gb = g_heads[k]
            gW[...] = np.matmul(a_in.transpose(0, 2, 1), dz)
            gb[...] = dz.sum(axis=1)
            dz = np.matmul(dz, W.transpose(0, 2, 1))
        dh = dz.sum(axis=0)
        for k in range(len(self.core) - 1, -1, -1):
            W, _ = self.core[k]
            dh = dh * (acts[k + 1] > 0)
            gW, gb = g_core[k]
            gW[...] = acts[k].T @ dh
            gb[...] = dh.sum(axis=0)
            dh = dh @ W.T
        return loss, grad
