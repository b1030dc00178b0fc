"""PID rudder autopilot on the course error, and a particle swarm tuner for its gains."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Callable

import numpy as np
import yaml

from rivernav import dynamics as dyn
from rivernav.environment import EpisodeConfig, RewardConfig, RiverEnv
from rivernav.guidance import GuidanceConfig
from rivernav.river import GenConfig, straight_channel

FAILURE_COST = 1e9


class PidConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PidGains:
    """Gains in degree units: rudder [deg] from course error [deg] and yaw rate [deg/s]."""

    Kp: float
    Kd: float
    Ki: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.Kp, self.Kd, self.Ki)):
            raise PidConfigError("PID gains must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.Kp, self.Kd, self.Ki])


REFERENCE_GAINS = PidGains(Kp=2.81, Kd=64.0, Ki=0.0)


@dataclass
class PidState:
    integral: float = 0.0  # accumulated course error [deg s]


def pid_command(
    chi_e: float, r: float, state: PidState, gains: PidGains, dt: float, max_rudder_deg: float = 20.0
) -> float:
    """Raw rudder command [rad]; rate limiting and range clamping happen downstream.

    The yaw-rate term opposes the turn, so it damps the heading response under
    the sign convention where positive rudder produces positive yaw rate. The
    integral is clamped so the integral term alone never exceeds full rudder.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    e = math.degrees(chi_e)
    state.integral += e * dt
    if gains.Ki != 0.0:
        lim = max_rudder_deg / abs(gains.Ki)
        state.integral = min(max(state.integral, -lim), lim)
    delta = gains.Kp * e - gains.Kd * math.degrees(r) + gains.Ki * state.integral
    return math.radians(delta)


@dataclass(frozen=True)
class PidScenario:
    """Straight canal calibration run: start off the path with a course error."""

    offset: float = -50.0  # lateral start offset [m], negative is starboard of the path
    heading_error_deg: float = 14.0
    U0: float = 2.0
    depth_ratio: float = 2.4
    horizon: int = 1000
    dt: float = 1.0
    n_prop: float = 4.0
    canal_length: float = 6000.0
    rudder_rate_deg: float = 2.0
    rudder_max_deg: float = 20.0


class PidController:
    """Stateful controller with optional Gaussian noise on its two inputs."""

    def __init__(self, gains: PidGains, sigma_r: float = 0.0, sigma_chi: float = 0.0, rng=None, max_rudder_deg=20.0):
        self.gains = gains
        self.sigma_r = sigma_r
        self.sigma_chi = sigma_chi
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.max_rudder_deg = max_rudder_deg
        self.state = PidState()

    def reset(self) -> None:
        self.state = PidState()

    def command(self, env: RiverEnv) -> float:
        chi_e, r = env.fix.chi_e, env.state.r
        if self.sigma_chi > 0:
            chi_e += self.rng.normal(0.0, self.sigma_chi)
        if self.sigma_r > 0:
            r += self.rng.normal(0.0, self.sigma_r)
        return pid_command(chi_e, r, self.state, self.gains, env.cfg.dt, self.max_rudder_deg)


def scenario_env(scenario: PidScenario, vessel: dyn.Vessel, record: bool = False) -> RiverEnv:
    gen = GenConfig(v_max=0.0, sigma=0.0)
    source = straight_channel(scenario.canal_length, gen, depth=scenario.depth_ratio * vessel.particulars.draught)
    episode = EpisodeConfig(
        dt=scenario.dt,
        max_steps=scenario.horizon,
        n_prop=scenario.n_prop,
        U0=scenario.U0,
        rudder_rate_deg=scenario.rudder_rate_deg,
        rudder_max_deg=scenario.rudder_max_deg,
    )
    return RiverEnv(vessel, source, episode, RewardConfig(), GuidanceConfig(), seed=0, record=record)


def run_scenario(gains: PidGains, scenario: PidScenario, vessel: dyn.Vessel | None = None, record: bool = True):
    """Simulate the calibration scenario; returns ``(env, reason, chi_e series)``."""
    vessel = dyn.load_vessel() if vessel is None else vessel
    env = scenario_env(scenario, vessel, record)
    env.reset(heading_noise=0.0, offset=scenario.offset, heading_error=math.radians(scenario.heading_error_deg))
    ctrl = PidController(gains, max_rudder_deg=scenario.rudder_max_deg)
    chi = [env.fix.chi_e]
    done, info = False, None
    while not done:
        _, _, done, info = env.step_rudder(ctrl.command(env))
        chi.append(env.fix.chi_e)
    return env, info.reason, np.array(chi)


def pid_objective(gains: PidGains, scenario: PidScenario = PidScenario(), vessel: dyn.Vessel | None = None) -> float:
    """Sum of squared course error [rad^2] times dt over the horizon.

    Grounding, leaving the canal, or a non-finite state costs ``FAILURE_COST``.
    """
    try:
        env, reason, chi = run_scenario(gains, scenario, vessel, record=False)
    except (FloatingPointError, ValueError, OverflowError):
        return FAILURE_COST
    if reason in ("aground", "out_of_river") or not np.all(np.isfinite(chi)):
        return FAILURE_COST
    return float(np.sum(chi[1:] ** 2) * scenario.dt)


@dataclass(frozen=True)
class PsoConfig:
    particles: int = 50
    iterations: int = 100
    w_range: tuple[float, float] = (0.5, 1.0)
    c1: float = 1.49445
    c2: float = 1.49445
    lower: tuple[float, ...] = (0.0, 0.0, 0.0)
    upper: tuple[float, ...] = (10.0, 150.0, 0.1)
    v_max_frac: float = 0.5  # velocity clamp as a fraction of the box width
    seed: int = 0

    def __post_init__(self):
        if self.particles < 1 or self.iterations < 0:
            raise PidConfigError("particle and iteration counts must be positive")
        if len(self.lower) != len(self.upper) or not self.lower:
            raise PidConfigError("box bounds need matching, non-empty dimensions")
        if any(not lo < hi for lo, hi in zip(self.lower, self.upper)):
            raise PidConfigError("every lower bound must be below its upper bound")
        lo, hi = self.w_range
        if not 0 <= lo <= hi:
            raise PidConfigError("inertia range must be ordered and non-negative")


@dataclass
class PsoResult:
    best: np.ndarray
    best_value: float
    history: list[tuple[int, float, tuple]] = field(default_factory=list)  # (iteration, gbest J, gbest)


def _stream(seed: int, particle: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, particle, iteration]))


def pso_minimize(
    objective: Callable[[np.ndarray], float],
    cfg: PsoConfig,
    init_positions=None,
    init_velocities=None,
    evaluate_many: Callable | None = None,
) -> PsoResult:
    """Global-best particle swarm with a fresh uniform inertia weight per update.

    Every random draw of particle ``i`` at iteration ``t`` comes from a stream
    seeded by ``(seed, i, t)``, so results do not depend on evaluation order.
    ``evaluate_many`` may map the objective over a list of positions in parallel.
    """
    lo, hi = np.array(cfg.lower, float), np.array(cfg.upper, float)
    dim, n = len(lo), cfg.particles
    vclip = cfg.v_max_frac * (hi - lo)
    if init_positions is None:
        x = np.array([_stream(cfg.seed, i, 0).uniform(lo, hi) for i in range(n)])
    else:
        x = np.array(init_positions, float).reshape(n, dim)
    v = np.zeros((n, dim)) if init_velocities is None else np.array(init_velocities, float).reshape(n, dim)
    evaluate = evaluate_many or (lambda xs: [objective(p) for p in xs])

    f = np.array(evaluate(list(x)), float)
    pbest, pval = x.copy(), f.copy()
    g = int(np.argmin(pval))
    gbest, gval = pbest[g].copy(), float(pval[g])
    history = [(0, gval, tuple(gbest))]
    for t in range(1, cfg.iterations + 1):
        for i in range(n):
            rng = _stream(cfg.seed, i, t)
            w = rng.uniform(*cfg.w_range)
            r1, r2 = rng.random(dim), rng.random(dim)
            v[i] = w * v[i] + cfg.c1 * r1 * (pbest[i] - x[i]) + cfg.c2 * r2 * (gbest - x[i])
            v[i] = np.clip(v[i], -vclip, vclip)
            x[i] = np.clip(x[i] + v[i], lo, hi)
        f = np.array(evaluate(list(x)), float)
        better = f < pval
        pbest[better], pval[better] = x[better], f[better]
        g = int(np.argmin(pval))
        if pval[g] < gval:
            gbest, gval = pbest[g].copy(), float(pval[g])
        history.append((t, gval, tuple(gbest)))
    return PsoResult(best=gbest, best_value=gval, history=history)


def _objective_worker(args):
    gains, scenario = args
    return pid_objective(PidGains(*gains), scenario)


def pso_tune(cfg: PsoConfig, scenario: PidScenario = PidScenario(), jobs: int = 1) -> tuple[PidGains, PsoResult]:
    """Tune (Kp, Kd, Ki) on the calibration scenario."""
    if len(cfg.lower) != 3:
        raise PidConfigError("PID tuning searches exactly three gains")
    vessel = dyn.load_vessel()
    if jobs > 1:
        pool = ProcessPoolExecutor(max_workers=jobs)

        def many(xs):
            return list(pool.map(_objective_worker, [(tuple(p), scenario) for p in xs]))

        try:
            res = pso_minimize(None, cfg, evaluate_many=many)
        finally:
            pool.shutdown()
    else:
        res = pso_minimize(lambda p: pid_objective(PidGains(*p), scenario, vessel), cfg)
    return PidGains(*map(float, res.best)), res


def sphere(x) -> float:
    return float(np.sum(np.asarray(x) ** 2))


def write_gains(gains: PidGains, path: str | FsPath, meta: dict | None = None) -> None:
    doc = {"controller": "pid", "Kp": gains.Kp, "Kd": gains.Kd, "Ki": gains.Ki}
    if meta:
        doc["meta"] = meta
    FsPath(path).write_text(yaml.safe_dump(doc, sort_keys=False))


def read_gains(path: str | FsPath) -> PidGains:
    doc = yaml.safe_load(FsPath(path).read_text())
    if not isinstance(doc, dict) or any(k not in doc for k in ("Kp", "Kd", "Ki")):
        raise PidConfigError(f"{path}: gains file needs Kp, Kd and Ki")
    return PidGains(float(doc["Kp"]), float(doc["Kd"]), float(doc["Ki"]))


def write_report(result: PsoResult, path: str | FsPath) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "gbest_J"] + [f"g{k}" for k in range(len(result.best))])
        for t, val, best in result.history:
            w.writerow([t, repr(val)] + [repr(float(b)) for b in best])
