"""Key/value configuration documents shared by the command-line tools."""

from __future__ import annotations

import dataclasses
from importlib import resources
from pathlib import Path as FsPath

import yaml

from rivernav.dynamics import load_vessel
from rivernav.environment import CURRICULA, EpisodeConfig, RewardConfig, RiverEnv, river_source
from rivernav.guidance import GuidanceConfig
from rivernav.pid import PidScenario, PsoConfig
from rivernav.river import GenConfig
from rivernav.rl.agent import TrainConfig

TUPLE_FIELDS = ("phi_deg", "r_range", "l_range", "core", "head", "input_scale", "w_range", "lower", "upper")


class ConfigError(ValueError):
    pass


def data_file(name: str) -> FsPath:
    """Path of a file shipped inside the package."""
    return FsPath(str(resources.files("rivernav.data").joinpath(name)))


def load_document(path) -> dict:
    path = FsPath(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a key/value document")
    return doc


def build(cls, block, where: str):
    """Instantiate a config dataclass from a mapping, rejecting unknown keys."""
    block = dict(block or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(block) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    for key in TUPLE_FIELDS:
        if isinstance(block.get(key), list):
            block[key] = tuple(block[key])
    try:
        return cls(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def gen_config(doc: dict, seed: int | None = None) -> GenConfig:
    block = dict(doc.get("river", doc))
    if seed is not None:
        block["seed"] = seed
    return build(GenConfig, block, "river")


def training_setup(doc: dict, algo: str | None = None):
    """Resolve a training document into ``(TrainConfig, make_env, extra)``.

    ``extra`` holds the environment settings a trained agent needs at
    evaluation time; it is stored in every checkpoint.
    """
    known = {"algo", "curriculum", "train", "river", "episode", "reward", "guidance", "straight_length"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown training sections {sorted(unknown)}")
    algo = algo or doc.get("algo", "kebdqn")
    if algo not in ("kebdqn", "dqn"):
        raise ConfigError(f"algo must be 'kebdqn' or 'dqn', got {algo!r}")
    block = dict(doc.get("train", {}))
    for key in ("core", "head", "input_scale"):
        if isinstance(block.get(key), list):
            block[key] = tuple(block[key])
    try:
        tcfg = TrainConfig.for_algo(algo, **block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train: {exc}") from None
    curriculum = doc.get("curriculum", "river")
    if curriculum not in CURRICULA:
        raise ConfigError(f"curriculum must be one of {CURRICULA}")
    gen = build(GenConfig, doc.get("river"), "river")
    episode = build(EpisodeConfig, doc.get("episode"), "episode")
    reward = build(RewardConfig, doc.get("reward"), "reward")
    guidance = build(GuidanceConfig, doc.get("guidance"), "guidance")
    source = river_source(gen, curriculum, float(doc.get("straight_length", 10_000.0)))
    vessel = load_vessel()

    def make_env(seed: int) -> RiverEnv:
        return RiverEnv(vessel, source, episode, reward, guidance, seed=seed)

    extra = {
        "curriculum": curriculum,
        "reward": dataclasses.asdict(reward),
        "episode": dataclasses.asdict(episode),
        "guidance": dataclasses.asdict(guidance),
    }
    return tcfg, make_env, extra


def pso_setup(doc: dict, seed: int | None = None) -> tuple[PsoConfig, PidScenario]:
    pso = dict(doc.get("pso", {}))
    if seed is not None:
        pso["seed"] = seed
    return build(PsoConfig, pso, "pso"), build(PidScenario, doc.get("scenario"), "scenario")
