"""Action selection and the DQN / KEBDQN training loop."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Callable

import numpy as np

from rivernav.rl.network import BootstrappedNet
from rivernav.rl.optim import Adam, AdamConfig
from rivernav.rl.replay import ReplayBuffer, draw_mask
from rivernav.rl.targets import dqn_target, keb_target

log = logging.getLogger(__name__)

HOLD = 1
ALGOS = ("kebdqn", "dqn")
CURVE_COLUMNS = ("episode", "steps", "return", "mean_abs_ye")


class TrainingDiverged(FloatingPointError):
    """Non-finite loss; a diagnostic checkpoint has been written if possible."""


@dataclass(frozen=True)
class TrainConfig:
    algo: str = "kebdqn"
    total_steps: int = 3_000_000
    batch: int = 128
    lr: float = 5e-4
    gamma: float = 0.99
    buffer_size: int = 1_000_000
    target_sync: int = 1000
    mask_p: float = 0.5
    n_heads: int = 10
    core: tuple[int, ...] = (128,)
    head: tuple[int, ...] = (128,)
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_decay_steps: int = 1_000_000
    learning_starts: int = 1000
    train_every: int = 1
    checkpoint_every: int = 100_000
    obs_dim: int = 14
    n_actions: int = 3
    input_scale: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"algo must be one of {ALGOS}")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        for name in ("batch", "buffer_size", "target_sync", "n_heads", "train_every", "obs_dim", "n_actions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.total_steps < 0 or self.learning_starts < 0 or self.eps_decay_steps < 0:
            raise ValueError("step counts must be non-negative")
        if self.algo == "dqn" and self.n_heads != 1:
            raise ValueError("DQN uses a single head")
        if self.input_scale is not None and len(self.input_scale) != self.obs_dim:
            raise ValueError("input_scale needs one entry per observation element")

    @classmethod
    def for_algo(cls, algo: str, **overrides) -> "TrainConfig":
        """Defaults per algorithm: 10 heads on a 128 core for KEBDQN, a single
        [256, 128] network for DQN."""
        base = {"algo": algo}
        if algo == "dqn":
            base.update(n_heads=1, core=(256,), head=(128,))
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("core", "head", "input_scale"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training options {sorted(unknown)}")
        d = dict(d)
        for k in ("core", "head", "input_scale"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


def select_action_train(q_row, rng: np.random.Generator | None = None, epsilon: float = 0.0) -> int:
    """Epsilon-greedy over one row of Q-values; plain argmax when epsilon is 0."""
    if epsilon > 0 and rng is not None and rng.random() < epsilon:
        return int(rng.integers(len(q_row)))
    return int(np.argmax(q_row))


def select_action_greedy(q_heads) -> int:
    """Argmax of the head-mean Q-values; ties go to HOLD, then the lower index."""
    mean = np.asarray(q_heads, dtype=float).reshape(-1, np.shape(q_heads)[-1]).mean(axis=0)
    best = mean.max()
    tied = np.flatnonzero(mean == best)
    if HOLD in tied:
        return HOLD
    return int(tied[0])


def epsilon_at(step: int, cfg: TrainConfig) -> float:
    if cfg.eps_decay_steps == 0:
        return cfg.eps_end
    frac = min(step / cfg.eps_decay_steps, 1.0)
    return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)


class Agent:
    def __init__(self, cfg: TrainConfig, seed: int = 0):
        self.cfg = cfg
        init_ss, act_ss = np.random.SeedSequence(seed).spawn(2)
        self.net = BootstrappedNet(
            (cfg.obs_dim,) + tuple(cfg.core), tuple(cfg.head) + (cfg.n_actions,), cfg.n_heads
        ).initialize(init_ss)
        self.target = self.net.clone()
        self.opt = Adam(self.net.size, AdamConfig(lr=cfg.lr))
        self.rng = np.random.default_rng(act_ss)
        self.input_scale = np.ones(cfg.obs_dim) if cfg.input_scale is None else np.array(cfg.input_scale, float)
        self.step = 0
        self.episode = 0
        self.updates = 0

    def q_values(self, obs, target: bool = False) -> np.ndarray:
        net = self.target if target else self.net
        return net.forward(np.asarray(obs, float) / self.input_scale)

    def act_greedy(self, obs) -> int:
        return select_action_greedy(self.q_values(obs))

    def act_train(self, obs, head: int) -> int:
        q = self.q_values(obs)
        if self.cfg.algo == "dqn":
            return select_action_train(q[0], self.rng, epsilon_at(self.step, self.cfg))
        return select_action_train(q[head])

    def sync_target(self) -> None:
        self.target.params[...] = self.net.params

    def compute_targets(self, batch) -> tuple[np.ndarray, np.ndarray]:
        cfg = self.cfg
        q_next = self.target.forward(batch["next_obs"] / self.input_scale)
        if cfg.algo == "dqn":
            y = dqn_target(batch["rewards"], batch["dones"], q_next[0], cfg.gamma)[:, None]
            return y, np.ones_like(y, dtype=bool)
        y = keb_target(batch["rewards"], batch["dones"], q_next, cfg.gamma)
        return y, batch["masks"]

    def update(self, batch) -> float:
        targets, mask = self.compute_targets(batch)
        loss, grad = self.net.loss_and_grad(batch["obs"] / self.input_scale, batch["actions"], targets, mask)
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise TrainingDiverged(f"non-finite loss at step {self.step}")
        self.opt.step(self.net.params, grad)
        self.updates += 1
        return loss


@dataclass
class TrainResult:
    agent: Agent
    curve: list[tuple] = field(default_factory=list)


def train(
    make_env: Callable[[int], object],
    cfg: TrainConfig,
    seed: int = 0,
    agent: Agent | None = None,
    checkpoint_dir: str | FsPath | None = None,
    progress_every: int = 0,
    checkpoint_extra: dict | None = None,
) -> TrainResult:
    """Run act/store/sample/update until ``cfg.total_steps`` environment steps.

    ``make_env(seed)`` builds the environment, which draws a new river on every
    reset. Passing a restored ``agent`` resumes its step counter; the replay
    memory starts empty. Periodic and diagnostic checkpoints go to
    ``checkpoint_dir`` when given. Returns the agent and per-episode rows
    ``(episode, steps, return, mean |y_e|)``; an unfinished final episode is not
    reported.
    """
    from rivernav.rl.checkpoint import save_checkpoint

    env_ss, mask_ss = np.random.SeedSequence([seed, 7]).spawn(2)
    if agent is None:
        agent = Agent(cfg, seed)
    env = make_env(int(env_ss.generate_state(1)[0]) + agent.step)
    mask_rng = np.random.default_rng(mask_ss)
    buf = ReplayBuffer(min(cfg.buffer_size, max(cfg.total_steps, 1)), cfg.obs_dim, cfg.n_heads)
    result = TrainResult(agent)
    ckpt_dir = FsPath(checkpoint_dir) if checkpoint_dir is not None else None

    def checkpoint(name):
        if ckpt_dir is not None:
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            save_checkpoint(ckpt_dir / name, agent, checkpoint_extra)

    if agent.step >= cfg.total_steps:
        return result
    obs = env.reset()
    head = int(agent.rng.integers(cfg.n_heads))
    ep_return, ep_ye, ep_len = 0.0, 0.0, 0
    while agent.step < cfg.total_steps:
        action = agent.act_train(obs, head)
        next_obs, reward, done, info = env.step(action)
        mask = draw_mask(mask_rng, cfg.n_heads, cfg.mask_p)
        buf.add(obs, action, reward, next_obs, info.terminal, mask)
        agent.step += 1
        ep_return += reward
        ep_ye += abs(info.fix.y_e)
        ep_len += 1
        obs = next_obs
        if agent.step >= cfg.learning_starts and agent.step % cfg.train_every == 0 and len(buf) >= cfg.batch:
            try:
                agent.update(buf.sample(cfg.batch, agent.rng))
            except TrainingDiverged:
                checkpoint("diagnostic.npz")
                raise
        if agent.step % cfg.target_sync == 0:
            agent.sync_target()
        if cfg.checkpoint_every and agent.step % cfg.checkpoint_every == 0:
            checkpoint(f"step_{agent.step}.npz")
        if done:
            agent.episode += 1
            result.curve.append((agent.episode, agent.step, ep_return, ep_ye / ep_len))
            if progress_every and agent.episode % progress_every == 0:
                recent = [row[2] for row in result.curve[-progress_every:]]
                log.info("episode %d step %d mean return %.1f", agent.episode, agent.step, float(np.mean(recent)))
            obs = env.reset()
            head = int(agent.rng.integers(cfg.n_heads))
            ep_return, ep_ye, ep_len = 0.0, 0.0, 0
    return result


def write_curve(rows, path: str | FsPath) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for ep, steps, ret, ye in rows:
            w.writerow([ep, steps, repr(float(ret)), repr(float(ye))])


def read_curve(path: str | FsPath) -> list[tuple]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return [(int(a), int(b), float(c), float(d)) for a, b, c, d in rows]
