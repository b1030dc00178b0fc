"""Experiments: maneuvering tests, straight-canal convergence, full-river sweeps,
noisy-observation runs, and the scenario files that describe them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np
import yaml

from rivernav import dynamics as dyn
from rivernav.angles import wrap_angle
from rivernav.environment import EpisodeConfig, RewardConfig, RiverEnv
from rivernav.guidance import GuidanceConfig, Path
from rivernav.pid import PidController, PidGains, read_gains
from rivernav.river import (
    GenConfig,
    RiverGrid,
    SegmentSpec,
    generate,
    read_grid,
    river_from_specs,
    straight_channel,
)

NOISE_SIGMA_R = 0.004  # rad/s
NOISE_SIGMA_CHI = math.radians(0.052)


class ScenarioError(ValueError):
    pass


# ---------------------------------------------------------------- summaries


@dataclass(frozen=True)
class DistributionSummary:
    median: float
    iqr: float
    min: float
    max: float
    mean: float

    def as_dict(self) -> dict:
        return {"median": self.median, "iqr": self.iqr, "min": self.min, "max": self.max, "mean": self.mean}


def summarize(series) -> DistributionSummary:
    """Order statistics of a series; quartiles use the midpoint (Hazen) rule."""
    a = np.asarray(series, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("cannot summarize an empty series")
    q25, q50, q75 = np.percentile(a, [25, 50, 75], method="hazen")
    return DistributionSummary(float(q50), float(q75 - q25), float(a.min()), float(a.max()), float(a.mean()))


@dataclass
class MetricsSeries:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    y_e: np.ndarray
    chi_e: np.ndarray
    delta: np.ndarray
    reward: np.ndarray
    U: np.ndarray
    advance: np.ndarray
    reason: str | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def completed(self) -> bool:
        return self.reason not in ("aground", "out_of_river")

    def summary(self) -> dict[str, DistributionSummary]:
        return {"abs_ye": summarize(np.abs(self.y_e)), "speed": summarize(self.U)}


COLUMNS = ("t", "x", "y", "psi", "y_e", "chi_e", "delta", "reward", "U", "advance")


def _series(rows, reason, **extra) -> MetricsSeries:
    arr = np.array(rows, dtype=float).reshape(-1, len(COLUMNS))
    return MetricsSeries(*(arr[:, k] for k in range(len(COLUMNS))), reason=reason, extra=extra)


def write_summary(summaries: dict[str, DistributionSummary], path, extra: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "median", "iqr", "min", "max", "mean"])
        for name, s in summaries.items():
            w.writerow([name] + [repr(v) for v in s.as_dict().values()])
        for k, v in (extra or {}).items():
            w.writerow([k, v, "", "", "", ""])


# ---------------------------------------------------------------- controllers


class FixedRudder:
    def __init__(self, delta: float = 0.0):
        self.delta = delta

    def reset(self) -> None:
        pass

    def command(self, env: RiverEnv, obs) -> float:
        return self.delta


class PidPolicy:
    """PID adapter for the experiment loop."""

    def __init__(self, gains: PidGains, sigma_r: float = 0.0, sigma_chi: float = 0.0, seed: int = 0):
        self.inner = PidController(gains, sigma_r, sigma_chi, np.random.default_rng(seed))

    def reset(self) -> None:
        self.inner.reset()

    def command(self, env: RiverEnv, obs) -> float:
        return self.inner.command(env)


class AgentPolicy:
    """Greedy ensemble policy; noise perturbs the yaw-rate and course-error slots
    of the observation, current and previous."""

    R_SLOTS = (2, 6)
    CHI_SLOTS = (10, 11)

    def __init__(self, agent, sigma_r: float = 0.0, sigma_chi: float = 0.0, seed: int = 0):
        self.agent = agent
        self.sigma_r = sigma_r
        self.sigma_chi = sigma_chi
        self.rng = np.random.default_rng(seed)
        self._prev = None

    def reset(self) -> None:
        self._prev = None

    def command(self, env: RiverEnv, obs) -> float:
        obs = np.array(obs, dtype=float)
        if self.sigma_r > 0 or self.sigma_chi > 0:
            r = obs[2] + (self.rng.normal(0.0, self.sigma_r) if self.sigma_r > 0 else 0.0)
            chi = obs[10] + (self.rng.normal(0.0, self.sigma_chi) if self.sigma_chi > 0 else 0.0)
            prev = (r, chi) if self._prev is None else self._prev
            obs[2], obs[6] = r, prev[0]
            obs[10], obs[11] = chi, prev[1]
            self._prev = (r, chi)
        return env.action_to_rudder(self.agent.act_greedy(obs))


# ---------------------------------------------------------------- episode runner


def run_episode(env: RiverEnv, controller, **reset_kwargs) -> MetricsSeries:
    """Drive one episode with ``controller.command(env, obs) -> rudder [rad]``."""
    obs = env.reset(**reset_kwargs)
    controller.reset()
    rows = [_row(env, 0.0)]
    done, info = False, None
    while not done:
        obs, r, done, info = env.step_rudder(controller.command(env, obs))
        rows.append(_row(env, r))
    return _series(rows, info.reason)


def _row(env: RiverEnv, r: float):
    s, f = env.state, env.fix
    return (env.t * env.cfg.dt, s.x, s.y, s.psi, f.y_e, f.chi_e, s.delta, r, env.ground_speed(), f.advance)


# ---------------------------------------------------------------- maneuvering tests


@dataclass
class ManeuverResult:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray  # unwrapped heading [rad]
    course: np.ndarray  # unwrapped course over ground [rad]
    r: np.ndarray
    delta: np.ndarray
    U: np.ndarray
    overshoots: list[float] = field(default_factory=list)  # zigzag [rad]
    tactical_diameter: float | None = None  # turning [m]
    steady_diameter: float | None = None
    steady_r_spread: float | None = None  # (max r - min r) / |mean r| over the final revolution

    def rows(self):
        return zip(self.t, self.x, self.y, self.psi, self.course, self.r, self.delta, self.U)


MANEUVER_COLUMNS = ("t", "x", "y", "psi", "course", "r", "delta", "U")


def _maneuver_setup(vessel: dyn.Vessel, h_over_d: float):
    depth = math.inf if math.isinf(h_over_d) else h_over_d * vessel.particulars.draught
    # validate the regime up front
    dyn.shallow_corrected(vessel.coeffs, depth, vessel.particulars.draught)
    return dyn.LocalEnvironment(depth=depth)


def zigzag_test(
    vessel: dyn.Vessel,
    angle_deg: float = 20.0,
    h_over_d: float = math.inf,
    cycles: int = 3,
    U0: float = 4.0,
    n_prop: float = 4.0,
    dt: float = 0.5,
    reference: str = "course",
    max_time: float = 3000.0,
) -> ManeuverResult:
    """Zigzag angle_deg/angle_deg: rudder to +angle, reverse each time the
    course (or heading) change reaches the angle, for ``cycles`` full cycles.

    Overshoot angles are the excursions beyond the switching angle after each
    reversal.
    """
    if reference not in ("course", "heading"):
        raise ValueError("reference must be 'course' or 'heading'")
    env = _maneuver_setup(vessel, h_over_d)
    a = math.radians(angle_deg)
    s = dyn.ShipState(u=U0)
    cmd = a
    t, rows = 0.0, []
    psi_prev, psi_unwrapped = 0.0, 0.0
    switches, peak, overshoots = 0, None, []

    def record():
        beta = dyn.drift_angle(s)
        rows.append((t, s.x, s.y, psi_unwrapped, psi_unwrapped + beta, s.r, s.delta, s.speed()))

    record()
    while t < max_time and switches <= 2 * cycles:
        s = dyn.step(s, cmd, n_prop, env, dt, vessel)
        t += dt
        psi_unwrapped += wrap_angle(s.psi - psi_prev)
        psi_prev = s.psi
        record()
        ref = rows[-1][4] if reference == "course" else psi_unwrapped
        if peak is not None:
            # track the excursion past the switching angle until the turn reverses
            if cmd < 0 and ref > peak:
                peak = ref
            elif cmd > 0 and ref < peak:
                peak = ref
            else:
                overshoots.append(abs(peak) - a)
                peak = None
        if cmd > 0 and ref >= a:
            cmd, switches, peak = -a, switches + 1, ref
        elif cmd < 0 and ref <= -a:
            cmd, switches, peak = a, switches + 1, ref
    arr = np.array(rows)
    return ManeuverResult(*(arr[:, k] for k in range(8)), overshoots=overshoots)


def _fit_circle(x, y) -> tuple[float, float, float]:
    """Algebraic least-squares circle fit; returns (cx, cy, radius)."""
    A = np.column_stack([x, y, np.ones_like(x)])
    b = x**2 + y**2
    (c0, c1, c2), *_ = np.linalg.lstsq(A, b, rcond=None)
    cx, cy = c0 / 2, c1 / 2
    return cx, cy, math.sqrt(c2 + cx**2 + cy**2)


def turning_test(
    vessel: dyn.Vessel,
    h_over_d: float = math.inf,
    rudder_deg: float = 35.0,
    U0: float = 4.0,
    n_prop: float = 4.0,
    dt: float = 0.5,
    revolutions: float = 3.0,
    max_time: float = 20000.0,
) -> ManeuverResult:
    """Hold the rudder until the heading has changed by more than 540 degrees
    and by ``revolutions`` full turns.

    Tactical diameter is the transfer at 180 degrees of heading change; the
    steady diameter is fitted over the final full revolution.
    """
    stop = max(3 * math.pi, 2 * math.pi * revolutions)
    env = _maneuver_setup(vessel, h_over_d)
    target = math.radians(rudder_deg)
    s = dyn.ShipState(u=U0)
    t, psi_prev, psi_unwrapped = 0.0, 0.0, 0.0
    rows = [(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, s.speed())]
    while abs(psi_unwrapped) <= stop:
        if t >= max_time:
            raise dyn.InvalidRegimeError("turning test did not complete 540 degrees of heading change")
        s = dyn.step(s, target, n_prop, env, dt, vessel)
        t += dt
        psi_unwrapped += wrap_angle(s.psi - psi_prev)
        psi_prev = s.psi
        rows.append((t, s.x, s.y, psi_unwrapped, psi_unwrapped + dyn.drift_angle(s), s.r, s.delta, s.speed()))
    arr = np.array(rows)
    res = ManeuverResult(*(arr[:, k] for k in range(8)))
    turn = np.abs(res.psi)
    k180 = int(np.argmax(turn >= math.pi))
    res.tactical_diameter = float(abs(res.y[k180]))
    last = turn >= turn[-1] - 2 * math.pi
    _, _, radius = _fit_circle(res.x[last], res.y[last])
    res.steady_diameter = 2 * radius
    r_last = res.r[last]
    res.steady_r_spread = float((r_last.max() - r_last.min()) / abs(r_last.mean()))
    return res


def write_maneuver(result: ManeuverResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANEUVER_COLUMNS)
        for row in result.rows():
            w.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------- path experiments


def straight_canal(vessel: dyn.Vessel, depth_ratio: float = 2.4, length: float = 6000.0):
    gen = GenConfig(v_max=0.0, sigma=0.0)
    return straight_channel(length, gen, depth=depth_ratio * vessel.particulars.draught)


def straight_path_experiment(
    controller,
    vessel: dyn.Vessel,
    offset: float = -50.0,
    heading_err_deg: float = 14.0,
    U0: float = 2.0,
    depth_ratio: float = 2.4,
    n_prop: float = 4.0,
    max_advance: float = 3000.0,
    max_steps: int = 3000,
    reward_cfg: RewardConfig = RewardConfig(),
    guidance: GuidanceConfig = GuidanceConfig(),
) -> tuple[MetricsSeries, float | None]:
    """Start ``offset`` metres beside a straight canal path (negative is
    starboard) with a course error, and run until ``max_advance`` metres of
    advance. Returns the series and the advance at which |y_e| first drops
    below 1 m for good (None if it never does)."""
    grid, path = straight_canal(vessel, depth_ratio, length=max_advance + 1000.0)
    path = _truncate(path, max_advance)
    episode = EpisodeConfig(max_steps=max_steps, n_prop=n_prop, U0=U0)
    env = RiverEnv(vessel, (grid, path), episode, reward_cfg, guidance, seed=0)
    series = run_episode(
        env, controller, heading_noise=0.0, offset=offset, heading_error=math.radians(heading_err_deg)
    )
    return series, convergence_advance(series)


def _truncate(path: Path, length: float) -> Path:
    cum = np.concatenate([[0.0], np.cumsum(path.lengths)])
    keep = int(np.searchsorted(cum, length, side="left")) + 1
    return Path(path.waypoints[: max(keep, 2)])


def convergence_advance(series: MetricsSeries, threshold: float = 1.0) -> float | None:
    above = np.flatnonzero(np.abs(series.y_e) >= threshold)
    if len(above) == 0:
        return float(series.advance[0])
    k = above[-1] + 1
    if k >= len(series):
        return None
    return float(series.advance[k])


def river_sweep(
    grid: RiverGrid,
    path: Path,
    controller,
    vessel: dyn.Vessel,
    n_prop: float = 4.0,
    U0: float = 4.0,
    max_steps: int | None = None,
    reward_cfg: RewardConfig = RewardConfig(),
    guidance: GuidanceConfig = GuidanceConfig(),
) -> tuple[dict[str, DistributionSummary], MetricsSeries]:
    """Whole-river single episode; grounding ends the run and is reported via
    ``series.reason`` rather than raised."""
    if max_steps is None:
        max_steps = int(path.total_length() / 0.5) + 1
    episode = EpisodeConfig(max_steps=max_steps, n_prop=n_prop, U0=U0)
    env = RiverEnv(vessel, (grid, path), episode, reward_cfg, guidance, seed=0, record=True)
    series = run_episode(env, controller, heading_noise=0.0)
    series.extra["trace"] = env.trace
    return series.summary(), series


@dataclass
class NoisyResult:
    clean: MetricsSeries
    runs: list[MetricsSeries]
    mean: np.ndarray
    std: np.ndarray
    inside_fraction: float  # share of steps where the clean trace lies within mean +- 3 std


def noisy_observation_experiment(
    make_controller,
    run,
    n_runs: int = 10,
    sigma_r: float = NOISE_SIGMA_R,
    sigma_chi: float = NOISE_SIGMA_CHI,
    seed: int = 0,
) -> NoisyResult:
    """``make_controller(sigma_r, sigma_chi, seed)`` builds a controller and
    ``run(controller)`` returns its MetricsSeries. The clean run uses zero noise."""
    clean = run(make_controller(0.0, 0.0, seed))
    seeds = np.random.SeedSequence(seed).generate_state(n_runs)
    runs = [run(make_controller(sigma_r, sigma_chi, int(s))) for s in seeds]
    n = min([len(clean)] + [len(r) for r in runs])
    stack = np.array([r.y_e[:n] for r in runs])
    mean, std = stack.mean(axis=0), stack.std(axis=0, ddof=1) if n_runs > 1 else np.zeros(n)
    inside = np.abs(clean.y_e[:n] - mean) <= 3 * std
    return NoisyResult(clean, runs, mean, std, float(inside.mean()))


def ingest_grid(path) -> RiverGrid:
    """Load and validate an external or generated grid file."""
    return read_grid(path)


# ---------------------------------------------------------------- scenario files


@dataclass
class Scenario:
    name: str
    experiment: str  # "sweep", "straight" or "noisy"
    grid: RiverGrid | None
    path: Path | None
    controller: dict
    n_prop: float = 4.0
    U0: float = 4.0
    offset: float = 0.0
    heading_error_deg: float = 0.0
    sigma_r: float = 0.0
    sigma_chi_deg: float = 0.0
    n_runs: int = 10
    max_steps: int | None = None
    base_dir: FsPath = FsPath(".")
    sources: list = field(default_factory=list)  # files read while loading


EXPERIMENTS = ("sweep", "straight", "noisy")


def _specs_from_doc(items) -> list[SegmentSpec]:
    specs = []
    for item in items:
        kind = item.get("kind")
        if kind == "straight":
            specs.append(SegmentSpec.straight(float(item["length"])))
        elif kind == "curved":
            specs.append(SegmentSpec.curved(float(item["radius"]), math.radians(float(item["phi_deg"]))))
        else:
            raise ScenarioError(f"unknown segment kind {kind!r}")
    return specs


def load_scenario(path) -> Scenario:
    """Parse a scenario document; file references are relative to its directory."""
    path = FsPath(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: scenario must be a key/value document")
    base = path.parent
    sources = [path]
    river = doc.get("river", {})
    gen_kw = dict(river.get("gen", {}))
    for key in ("phi_deg", "r_range", "l_range"):
        if key in gen_kw:
            gen_kw[key] = tuple(gen_kw[key])
    try:
        gen = GenConfig(**gen_kw)
    except TypeError as exc:
        raise ScenarioError(f"river.gen: {exc}") from None
    if "grid_file" in river:
        gfile = base / river["grid_file"]
        grid = read_grid(gfile)
        sources.append(gfile)
        if "path_file" in river:
            pfile = base / river["path_file"]
            rpath = Path.load(pfile)
            sources.append(pfile)
        else:
            rpath = Path(grid.centerline[:: gen.waypoint_stride])
    elif "segments" in river:
        grid, rpath = river_from_specs(_specs_from_doc(river["segments"]), gen)
    else:
        grid, rpath = generate(gen)
    if river.get("reverse", False):
        rpath = Path(rpath.waypoints[::-1])
    experiment = doc.get("experiment", "sweep")
    if experiment not in EXPERIMENTS:
        raise ScenarioError(f"experiment must be one of {EXPERIMENTS}")
    ctrl = dict(doc.get("controller", {"type": "fixed", "delta_deg": 0.0}))
    for key in ("gains_file", "checkpoint"):
        if key in ctrl:
            ctrl[key] = base / ctrl[key]
            sources.append(ctrl[key])
    noise = doc.get("noise", {})
    known = {"name", "experiment", "river", "controller", "n_prop", "U0", "offset", "heading_error_deg",
             "noise", "n_runs", "max_steps"}
    unknown = set(doc) - known
    if unknown:
        raise ScenarioError(f"unknown scenario keys {sorted(unknown)}")
    return Scenario(
        name=str(doc.get("name", path.stem)),
        experiment=experiment,
        grid=grid,
        path=rpath,
        controller=ctrl,
        n_prop=float(doc.get("n_prop", 4.0)),
        U0=float(doc.get("U0", 4.0)),
        offset=float(doc.get("offset", 0.0)),
        heading_error_deg=float(doc.get("heading_error_deg", 0.0)),
        sigma_r=float(noise.get("sigma_r", 0.0)),
        sigma_chi_deg=float(noise.get("sigma_chi_deg", 0.0)),
        n_runs=int(doc.get("n_runs", 10)),
        max_steps=doc.get("max_steps"),
        base_dir=base,
        sources=sources,
    )


def make_controller(spec: dict, sigma_r: float = 0.0, sigma_chi: float = 0.0, seed: int = 0):
    """Controller factory from a scenario ``controller`` block."""
    kind = spec.get("type")
    if kind == "fixed":
        return FixedRudder(math.radians(float(spec.get("delta_deg", 0.0))))
    if kind == "pid":
        if "gains_file" in spec:
            gains = read_gains(spec["gains_file"])
        else:
            gains = PidGains(float(spec["Kp"]), float(spec["Kd"]), float(spec.get("Ki", 0.0)))
        return PidPolicy(gains, sigma_r, sigma_chi, seed)
    if kind in ("kebdqn", "dqn", "agent"):
        from rivernav.rl.checkpoint import load_checkpoint

        agent, _ = load_checkpoint(spec["checkpoint"])
        return AgentPolicy(agent, sigma_r, sigma_chi, seed)
    raise ScenarioError(f"unknown controller type {kind!r}")


def controller_reward_config(spec: dict) -> RewardConfig:
    """Observation settings stored with a trained agent, defaults otherwise."""
    if spec.get("type") in ("kebdqn", "dqn", "agent"):
        from rivernav.rl.checkpoint import load_checkpoint

        _, extra = load_checkpoint(spec["checkpoint"])
        return RewardConfig(**extra.get("reward", {}))
    return RewardConfig()


def run_scenario(sc: Scenario, vessel: dyn.Vessel | None = None, seed: int = 0) -> dict:
    """Execute a scenario; returns series, summaries and experiment-specific extras."""
    vessel = dyn.load_vessel() if vessel is None else vessel
    rcfg = controller_reward_config(sc.controller)
    sig_chi = math.radians(sc.sigma_chi_deg)
    if sc.experiment == "straight":
        series, conv = straight_path_experiment(
            make_controller(sc.controller, sc.sigma_r, sig_chi, seed), vessel, offset=sc.offset,
            heading_err_deg=sc.heading_error_deg, U0=sc.U0, n_prop=sc.n_prop, reward_cfg=rcfg,
            max_steps=sc.max_steps or 3000,
        )
        return {"series": series, "summary": series.summary(), "extra": {"convergence_advance": conv}}

    def run(ctrl):
        max_steps = sc.max_steps or int(sc.path.total_length() / 0.5) + 1
        episode = EpisodeConfig(max_steps=max_steps, n_prop=sc.n_prop, U0=sc.U0)
        env = RiverEnv(vessel, (sc.grid, sc.path), episode, rcfg, GuidanceConfig(), seed=0)
        return run_episode(env, ctrl, heading_noise=0.0, offset=sc.offset,
                           heading_error=math.radians(sc.heading_error_deg))

    if sc.experiment == "sweep":
        series = run(make_controller(sc.controller, sc.sigma_r, sig_chi, seed))
        return {"series": series, "summary": series.summary(), "extra": {"reason": series.reason}}
    res = noisy_observation_experiment(
        lambda sr, sc_, s: make_controller(sc.controller, sr, sc_, s), run, sc.n_runs,
        sc.sigma_r or NOISE_SIGMA_R, sig_chi or NOISE_SIGMA_CHI, seed,
    )
    return {
        "series": res.clean,
        "summary": res.clean.summary(),
        "extra": {"inside_fraction": res.inside_fraction, "max_std": float(res.std.max())},
        "band": (res.mean, res.std),
    }


def write_series(series: MetricsSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        cols = [getattr(series, c) for c in COLUMNS]
        for k in range(len(series)):
            w.writerow([repr(float(c[k])) for c in cols])


def write_band(mean, std, clean: MetricsSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "clean_y_e", "mean_y_e", "std_y_e"])
        for k in range(len(mean)):
            w.writerow([repr(float(clean.t[k])), repr(float(clean.y_e[k])), repr(float(mean[k])), repr(float(std[k]))])


__all__ = [
    "AgentPolicy", "DistributionSummary", "FixedRudder", "ManeuverResult", "MetricsSeries", "NoisyResult",
    "PidPolicy", "Scenario", "ScenarioError", "convergence_advance", "ingest_grid", "load_scenario",
    "make_controller", "noisy_observation_experiment", "river_sweep", "run_episode", "run_scenario",
    "straight_path_experiment", "summarize", "turning_test", "write_maneuver", "write_series", "zigzag_test",
]
