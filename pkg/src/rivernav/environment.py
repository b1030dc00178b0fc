"""Path-following MDP on a river grid: reset/step, observation, reward, traces."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path as FsPath
from typing import Callable

import numpy as np

from rivernav import dynamics as dyn
from rivernav.angles import wrap_angle
from rivernav.guidance import GuidanceConfig, Path, PathFix, path_fix
from rivernav.river import OutOfRiverError, RiverGrid

OBS_DIM = 14
N_ACTIONS = 3

TRACE_COLUMNS = (
    "t", "x", "y", "psi", "u", "v_m", "r", "delta", "y_e", "chi_e", "reward", "h", "current_dir", "current_speed",
)


class Action(IntEnum):
    DECREASE = 0
    HOLD = 1
    INCREASE = 2


class EpisodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class RewardConfig:
    c1: float = 1.0
    ye_scale: float = 1.0  # optional divisor applied to y_e before the tanh squashing
    c2: float = 0.1
    c3: float = 10.0
    omega1: float = 0.6
    omega2: float = 0.4
    aground_penalty: float = -20.0
    aground_ratio: float = 1.2

    def __post_init__(self):
        if abs(self.omega1 + self.omega2 - 1.0) > 1e-12:
            raise ValueError("omega1 + omega2 must equal 1")
        if not (self.c2 > 0 and self.c3 > 0 and self.c1 > 0 and self.ye_scale > 0):
            raise ValueError("c1, c2, c3 and ye_scale must be positive")


@dataclass(frozen=True)
class EpisodeConfig:
    dt: float = 1.0
    max_steps: int = 2000
    n_prop: float = 4.0
    U0: float = 4.0
    heading_noise_deg: float = 5.0
    rudder_step_deg: float = 2.0
    rudder_max_deg: float = 20.0
    rudder_rate_deg: float = 2.0

    def __post_init__(self):
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool


def reward(y_e: float, chi_e: float, h: float, cfg: RewardConfig, d: float) -> float:
    """Cross-track and course-error terms plus the grounding penalty."""
    r = cfg.omega1 * math.exp(-cfg.c2 * abs(y_e)) + cfg.omega2 * math.exp(-cfg.c3 * abs(chi_e))
    if h < cfg.aground_ratio * d:
        r += cfg.aground_penalty
    return r


def squash_cross_track(y_e: float, cfg: RewardConfig) -> float:
    return cfg.c1 * math.tanh(y_e / cfg.ye_scale)


def current_direction(env: dyn.LocalEnvironment) -> float:
    if env.current_u == 0.0 and env.current_v == 0.0:
        return 0.0
    return math.atan2(env.current_v, env.current_u)


def observe(
    state: dyn.ShipState,
    prev_state: dyn.ShipState,
    fix: PathFix,
    prev_fix: PathFix,
    env: dyn.LocalEnvironment,
    max_depth: float,
    draught: float,
    cfg: RewardConfig,
    prev_env: dyn.LocalEnvironment | None = None,
) -> np.ndarray:
    """The 14-element state: vessel terms now and one step ago, then path and
    surroundings terms.

    Velocities are over ground in the body frame.
    """
    u, v = dyn.ground_velocity(state, env)
    pu, pv = dyn.ground_velocity(prev_state, env if prev_env is None else prev_env)
    return np.array(
        [
            u, v, state.r, state.delta,
            pu, pv, prev_state.r, prev_state.delta,
            squash_cross_track(fix.y_e, cfg), squash_cross_track(prev_fix.y_e, cfg),
            fix.chi_e, prev_fix.chi_e,
            (env.depth - draught) / max_depth,
            wrap_angle(current_direction(env) - state.psi),
        ],
        dtype=float,
    )


def over_ground_drift(state: dyn.ShipState, env: dyn.LocalEnvironment) -> float:
    u, v = dyn.ground_velocity(state, env)
    if u == 0.0 and v == 0.0:
        return 0.0
    return math.atan2(v, u)


RiverSource = Callable[[np.random.Generator], tuple[RiverGrid, Path]]


@dataclass
class StepInfo:
    reason: str | None  # None while running; "aground", "out_of_river", "max_steps" or "path_end"
    terminal: bool  # true only for outcomes that end the MDP (grounding, leaving the river)
    fix: PathFix
    local: dyn.LocalEnvironment
    extra: dict = field(default_factory=dict)


class RiverEnv:
    """Gym-style environment; a fresh river is drawn from ``source`` on every reset.

    ``source`` is either a fixed ``(grid, path)`` pair or a callable receiving the
    episode generator.
    """

    def __init__(
        self,
        vessel: dyn.Vessel,
        source: RiverSource | tuple[RiverGrid, Path],
        episode: EpisodeConfig = EpisodeConfig(),
        reward_cfg: RewardConfig = RewardConfig(),
        guidance: GuidanceConfig = GuidanceConfig(),
        seed: int | None = 0,
        record: bool = False,
    ):
        self.vessel = vessel
        self.source = source
        self.cfg = episode
        self.reward_cfg = reward_cfg
        self.guidance = guidance
        self.rng = np.random.default_rng(seed)
        self.record = record
        self.trace: list[tuple] = []
        self.done = True
        self.grid: RiverGrid | None = None
        self.path: Path | None = None

    @property
    def draught(self) -> float:
        return self.vessel.particulars.draught

    def _river(self):
        if callable(self.source):
            return self.source(self.rng)
        return self.source

    def reset(
        self,
        heading_noise: float | None = None,
        offset: float = 0.0,
        heading_error: float = 0.0,
        U0: float | None = None,
    ) -> np.ndarray:
        """Start an episode at the first waypoint.

        ``offset`` shifts the start laterally (positive to the left of the path)
        and ``heading_error`` is subtracted from the desired course; both are zero
        in training. ``heading_noise`` overrides the random heading perturbation.
        """
        self.grid, self.path = self._river()
        p0 = self.path.waypoints[0]
        chi_p0 = float(self.path.headings[0])
        if heading_noise is None:
            lim = math.radians(self.cfg.heading_noise_deg)
            heading_noise = float(self.rng.uniform(-lim, lim))
        pos = (p0[0] - offset * math.sin(chi_p0), p0[1] + offset * math.cos(chi_p0))
        try:
            local = self.grid.query(pos)
        except OutOfRiverError as exc:
            raise EpisodeError(f"start position outside the grid: {exc}") from None
        if heading_error == 0.0:
            psi0 = chi_p0 + heading_noise
        else:
            fix0 = path_fix(self.path, pos, chi_p0, 0.0, 0, self.guidance)
            psi0 = fix0.chi_d - heading_error + heading_noise
        self.state = dyn.ShipState(x=pos[0], y=pos[1], psi=wrap_angle(psi0), u=self.cfg.U0 if U0 is None else U0)
        self.local = local
        self.k = 0
        self.t = 0
        self.fix = self._fix(self.state, local)
        self.prev_state, self.prev_fix, self.prev_local = self.state, self.fix, local
        self.done = False
        self.trace = []
        if self.record:
            self._record(0.0)
        return self.observation()

    def _fix(self, state: dyn.ShipState, local: dyn.LocalEnvironment) -> PathFix:
        beta = over_ground_drift(state, local)
        fix = path_fix(self.path, (state.x, state.y), state.psi, beta, self.k, self.guidance)
        self.k = fix.segment_index
        return fix

    def observation(self) -> np.ndarray:
        return observe(
            self.state, self.prev_state, self.fix, self.prev_fix, self.local,
            self.grid.max_depth, self.draught, self.reward_cfg, self.prev_local,
        )

    def action_to_rudder(self, action: int) -> float:
        step = math.radians(self.cfg.rudder_step_deg) * (int(action) - 1)
        lim = math.radians(self.cfg.rudder_max_deg)
        return min(max(self.state.delta + step, -lim), lim)

    def step(self, action: int):
        if int(action) not in (0, 1, 2):
            raise ValueError(f"invalid action {action!r}")
        return self.step_rudder(self.action_to_rudder(action))

    def step_rudder(self, delta_cmd: float):
        """Advance one control interval with an absolute rudder command.

        Returns ``(obs, reward, done, info)``.
        """
        if self.done:
            raise EpisodeError("episode is over; call reset()")
        cfg = self.cfg
        lim = math.radians(cfg.rudder_max_deg)
        delta_cmd = min(max(delta_cmd, -lim), lim)
        new = dyn.step(
            self.state, delta_cmd, cfg.n_prop, self.local, cfg.dt, self.vessel, math.radians(cfg.rudder_rate_deg)
        )
        self.prev_state, self.prev_fix, self.prev_local = self.state, self.fix, self.local
        self.state = new
        self.t += 1
        reason = None
        try:
            self.local = self.grid.query((new.x, new.y))
            h = self.local.depth
            self.fix = self._fix(new, self.local)
        except OutOfRiverError:
            # keep the last valid surroundings; leaving through the downstream
            # end completes the path, leaving anywhere else counts as grounded
            self.fix = self._fix(new, self.local)
            if self.fix.advance >= self.path.total_length():
                h = self.local.depth
            else:
                reason = "out_of_river"
                h = 0.0
        rcfg = self.reward_cfg
        r = reward(self.fix.y_e, self.fix.chi_e, h, rcfg, self.draught)
        if reason is None and h < rcfg.aground_ratio * self.draught:
            reason = "aground"
        terminal = reason is not None
        if reason is None:
            if self.fix.advance >= self.path.total_length():
                reason = "path_end"
            elif self.t >= cfg.max_steps:
                reason = "max_steps"
        self.done = reason is not None
        if self.record:
            self._record(r, h)
        info = StepInfo(reason=reason, terminal=terminal, fix=self.fix, local=self.local)
        return self.observation(), r, self.done, info

    def _record(self, r: float, h: float | None = None):
        s, loc = self.state, self.local
        self.trace.append(
            (
                self.t * self.cfg.dt, s.x, s.y, s.psi, s.u, s.v_m, s.r, s.delta,
                self.fix.y_e, self.fix.chi_e, r, loc.depth if h is None else h,
                current_direction(loc), loc.current_speed,
            )
        )

    def ground_speed(self) -> float:
        u, v = dyn.ground_velocity(self.state, self.local)
        return math.hypot(u, v)


def write_trace(rows, path: str | FsPath) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def read_trace(path: str | FsPath) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]) if body else np.empty((0, len(header)))
    return {name: data[:, k] for k, name in enumerate(header)}


CURRICULA = ("river", "straight")


def river_source(gen_cfg, curriculum: str = "river", straight_length: float = 10_000.0) -> RiverSource:
    """Per-episode river factory.

    ``"river"`` draws a fresh random river on every reset; ``"straight"`` draws
    a straight channel with random depth noise and no current.
    """
    from dataclasses import replace

    from rivernav.river import build_grid, centerline_path, generate, sample_depth, SegmentSpec

    if curriculum not in CURRICULA:
        raise ValueError(f"curriculum must be one of {CURRICULA}")
    if curriculum == "river":
        return lambda rng: generate(gen_cfg, int(rng.integers(2**63)))
    still = replace(gen_cfg, v_max=0.0)
    base = build_grid([SegmentSpec.straight(straight_length)], still)

    def straight(rng):
        grid = sample_depth(base, still, np.random.default_rng(int(rng.integers(2**63))))
        return grid, centerline_path(grid, still.waypoint_stride)

    return straight
