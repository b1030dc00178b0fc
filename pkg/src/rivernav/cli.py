"""Command-line entry point: generate, train, tune-pid, maneuver, evaluate.

Every run writes ``manifest.json`` into its output directory before starting
and finalizes it afterwards. Output files never contain timestamps, so equal
inputs and seeds reproduce them byte for byte.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path as FsPath

import yaml

from rivernav import __version__
from rivernav import config as conf
from rivernav import dynamics as dyn
from rivernav import evaluation as ev
from rivernav import pid
from rivernav.river import generate, read_grid, write_grid
from rivernav.rl import checkpoint as ckpt
from rivernav.rl.agent import Agent, TrainingDiverged, train, write_curve

log = logging.getLogger("rivernav")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Manifest:
    """Run record: written on entry with status ``running``, finalized on exit."""

    def __init__(self, out: FsPath, subcommand: str, seed, config: dict, inputs=()):
        self.path = out / "manifest.json"
        self.doc = {
            "subcommand": subcommand,
            "tool_version": __version__,
            "seed": seed,
            "config": config,
            "inputs": {str(p): sha256(p) for p in inputs},
            "outputs": [],
            "status": "running",
            "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }
        self.write()

    def write(self) -> None:
        self.path.write_text(json.dumps(self.doc, indent=2, default=str) + "\n")

    def finish(self, outputs, status: str = "ok", **extra) -> None:
        self.doc["outputs"] = [str(p) for p in outputs]
        self.doc["status"] = status
        self.doc["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        self.doc.update(extra)
        self.write()


def _outdir(path) -> FsPath:
    out = FsPath(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- subcommands


def cmd_generate(args) -> int:
    doc = conf.load_document(args.config) if args.config else {}
    cfg = conf.gen_config(doc, args.seed)
    out = _outdir(args.out)
    man = Manifest(out, "generate", cfg.seed, dataclasses.asdict(cfg), [args.config] if args.config else [])
    grid, path = generate(cfg)
    write_grid(grid, out / "grid.txt")
    path.save(out / "path.txt")
    read_grid(out / "grid.txt")  # the written file must pass ingestion
    man.finish([out / "grid.txt", out / "path.txt"])
    return EXIT_OK


def cmd_train(args) -> int:
    doc = conf.load_document(args.config) if args.config else {}
    tcfg, make_env, extra = conf.training_setup(doc, args.algo)
    out = _outdir(args.out)
    agent = None
    inputs = [p for p in (args.config, args.resume) if p]
    if args.resume:
        agent, _ = ckpt.load_checkpoint(args.resume)
        if agent.cfg.algo != tcfg.algo or agent.net.sizes() != Agent(tcfg).net.sizes():
            raise conf.ConfigError("resume checkpoint does not match the configured network")
        agent.cfg = tcfg
    man = Manifest(out, "train", args.seed, {"train": tcfg.to_dict(), **extra}, inputs)
    try:
        res = train(make_env, tcfg, args.seed, agent, out / "checkpoints", progress_every=args.progress, checkpoint_extra=extra)
    except TrainingDiverged:
        man.finish([out / "checkpoints" / "diagnostic.npz"], status="diverged")
        raise
    ckpt.save_checkpoint(out / "final.npz", res.agent, extra)
    write_curve(res.curve, out / "curve.csv")
    man.finish([out / "final.npz", out / "curve.csv"], cumulative_steps=res.agent.step, episodes=res.agent.episode)
    return EXIT_OK


def _sphere_self_test(seed: int) -> bool:
    cfg = pid.PsoConfig(particles=30, iterations=100, lower=(-5.0,) * 3, upper=(5.0,) * 3, seed=seed)
    res = pid.pso_minimize(pid.sphere, cfg)
    return res.best_value < 1e-6


def cmd_tune_pid(args) -> int:
    if args.self_test:
        ok = _sphere_self_test(0 if args.seed is None else args.seed)
        print("sphere self-test", "passed" if ok else "FAILED")
        return EXIT_OK if ok else EXIT_NUMERIC
    doc = conf.load_document(args.config) if args.config else {}
    pso_cfg, scenario = conf.pso_setup(doc, args.seed)
    out = _outdir(args.out)
    man = Manifest(
        out, "tune-pid", pso_cfg.seed,
        {"pso": dataclasses.asdict(pso_cfg), "scenario": dataclasses.asdict(scenario)},
        [args.config] if args.config else [],
    )
    gains, res = pid.pso_tune(pso_cfg, scenario, jobs=args.jobs)
    if res.best_value >= pid.FAILURE_COST:
        man.finish([], status="no-feasible-gains")
        raise FloatingPointError("no particle completed the calibration scenario")
    pid.write_gains(gains, out / "gains.yaml", {"J": res.best_value, "seed": pso_cfg.seed})
    pid.write_report(res, out / "report.csv")
    man.finish([out / "gains.yaml", out / "report.csv"], objective=res.best_value)
    return EXIT_OK


def cmd_maneuver(args) -> int:
    vessel = dyn.load_vessel(args.vessel)
    out = _outdir(args.out)
    h_over_d = math.inf if args.depth_ratio is None else args.depth_ratio
    settings = {"test": args.test, "depth_ratio": h_over_d, "dt": args.dt, "n_prop": args.n_prop, "U0": args.U0}
    if args.test == "zigzag":
        angle = 20.0 if args.angle is None else args.angle
        settings.update(angle_deg=angle, reference=args.reference)
    else:
        angle = 35.0 if args.angle is None else args.angle
        settings.update(rudder_deg=angle)
    man = Manifest(out, "maneuver", None, settings, [args.vessel] if args.vessel else [])
    if args.test == "zigzag":
        res = ev.zigzag_test(vessel, angle, h_over_d, U0=args.U0, n_prop=args.n_prop, dt=args.dt,
                             reference=args.reference)
        summary = {"overshoots_deg": [math.degrees(o) for o in res.overshoots]}
    else:
        res = ev.turning_test(vessel, h_over_d, angle, U0=args.U0, n_prop=args.n_prop, dt=args.dt)
        summary = {"tactical_diameter": res.tactical_diameter, "steady_diameter": res.steady_diameter,
                   "steady_r_spread": res.steady_r_spread}
    trace = out / f"{args.test}.csv"
    ev.write_maneuver(res, trace)
    (out / "summary.yaml").write_text(yaml.safe_dump(summary, sort_keys=False))
    man.finish([trace, out / "summary.yaml"])
    return EXIT_OK


def _evaluate_one(scenario_path: str, out: FsPath, seed: int) -> list[FsPath]:
    sc = ev.load_scenario(scenario_path)
    sub = _outdir(out / sc.name)
    man = Manifest(sub, "evaluate", seed, {"scenario": sc.name, "experiment": sc.experiment}, sc.sources)
    result = ev.run_scenario(sc, seed=seed)
    outputs = [sub / "trace.csv", sub / "summary.csv"]
    ev.write_series(result["series"], outputs[0])
    ev.write_summary(result["summary"], outputs[1], result["extra"])
    if "band" in result:
        outputs.append(sub / "band.csv")
        ev.write_band(*result["band"], result["series"], outputs[-1])
    man.finish(outputs, reason=result["series"].reason, **{k: v for k, v in result["extra"].items() if k != "reason"})
    return outputs


def cmd_evaluate(args) -> int:
    out = _outdir(args.out)
    if args.jobs > 1 and len(args.scenario) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_evaluate_one, s, out, args.seed) for s in args.scenario]
            for f in futures:
                f.result()
    else:
        for s in args.scenario:
            _evaluate_one(s, out, args.seed)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rivernav", description="River navigation simulation and control toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a random river grid and its centerline path")
    g.add_argument("--config", help="YAML generator settings (top level or under 'river')")
    g.add_argument("--seed", type=int, default=None, help="overrides the configured seed")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a DQN or KEBDQN agent")
    t.add_argument("--algo", choices=("kebdqn", "dqn"), default=None, help="overrides 'algo' in the config")
    t.add_argument("--config", help="YAML training document")
    t.add_argument("--seed", type=int, default=0, help="training seed")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--progress", type=int, default=0, help="log mean return every N episodes")
    t.set_defaults(func=cmd_train)

    u = sub.add_parser("tune-pid", help="tune PID gains with a particle swarm")
    u.add_argument("--config", help="YAML with 'pso' and 'scenario' sections")
    u.add_argument("--seed", type=int, default=None, help="overrides the configured swarm seed")
    u.add_argument("--out", help="output directory")
    u.add_argument("--jobs", type=int, default=1, help="parallel objective evaluations")
    u.add_argument("--self-test", action="store_true", help="minimize a sphere function and report")
    u.set_defaults(func=cmd_tune_pid)

    m = sub.add_parser("maneuver", help="run a zigzag or turning circle test")
    m.add_argument("--test", choices=("zigzag", "turning"), required=True, help="maneuver type")
    m.add_argument("--depth-ratio", type=float, default=None, help="water depth over draught; deep water if omitted")
    m.add_argument("--angle", type=float, default=None, help="rudder angle [deg]; 20 for zigzag, 35 for turning")
    m.add_argument("--reference", choices=("course", "heading"), default="course",
                   help="zigzag switching reference")
    m.add_argument("--dt", type=float, default=0.5, help="time step [s]")
    m.add_argument("--n-prop", type=float, default=4.0, help="propeller speed [rps]")
    m.add_argument("--U0", type=float, default=4.0, help="initial speed [m/s]")
    m.add_argument("--vessel", help="vessel particulars YAML; bundled vessel if omitted")
    m.add_argument("--out", required=True, help="output directory")
    m.set_defaults(func=cmd_maneuver, seed=None)

    e = sub.add_parser("evaluate", help="run one or more scenario files")
    e.add_argument("scenario", nargs="+", help="scenario YAML files")
    e.add_argument("--seed", type=int, default=0, help="seed for observation noise")
    e.add_argument("--out", required=True, help="output directory; one subdirectory per scenario")
    e.add_argument("--jobs", type=int, default=1, help="scenarios run in parallel")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "command", None) == "tune-pid" and not args.self_test and not args.out:
        print("error: --out is required unless --self-test is given", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (FloatingPointError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError, KeyError, yaml.YAMLError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
