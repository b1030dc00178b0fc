"""Versioned ``.npz`` checkpoints that round-trip bit-exactly."""

from __future__ import annotations

import json
from pathlib import Path as FsPath

import numpy as np

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, agent, extra: dict | None = None) -> None:
    """Write sizes, online and target parameters, Adam moments, counters and RNG state."""
    meta = {
        "version": FORMAT_VERSION,
        "sizes": agent.net.sizes(),
        "config": agent.cfg.to_dict(),
        "adam_t": agent.opt.t,
        "step": agent.step,
        "episode": agent.episode,
        "updates": agent.updates,
        "rng_state": agent.rng.bit_generator.state,
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        np.savez(
            fh,
            meta=np.array(json.dumps(meta)),
            params=agent.net.params,
            target_params=agent.target.params,
            adam_m=agent.opt.m,
            adam_v=agent.opt.v,
            input_scale=agent.input_scale,
        )


def load_checkpoint(path):
    """Rebuild the agent stored at ``path``; returns ``(agent, extra)``."""
    from rivernav.rl.agent import Agent, TrainConfig

    try:
        with np.load(FsPath(path), allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    for key in ("meta", "params", "target_params", "adam_m", "adam_v", "input_scale"):
        if key not in arrays:
            raise CheckpointError(f"checkpoint {path} lacks {key!r}")
    meta = json.loads(str(arrays["meta"]))
    if meta.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('version')}")
    cfg = TrainConfig.from_dict(meta["config"])
    agent = Agent(cfg, seed=0)
    sizes = agent.net.sizes()
    if sizes != meta["sizes"]:
        raise CheckpointError(f"layer sizes {meta['sizes']} disagree with config {sizes}")
    agent.net.params[...] = arrays["params"]
    agent.target.params[...] = arrays["target_params"]
    agent.opt.m[...] = arrays["adam_m"]
    agent.opt.v[...] = arrays["adam_v"]
    agent.opt.t = int(meta["adam_t"])
    agent.input_scale = np.array(arrays["input_scale"])
    agent.step = int(meta["step"])
    agent.episode = int(meta["episode"])
    agent.updates = int(meta["updates"])
    agent.rng.bit_generator.state = meta["rng_state"]
    return agent, meta["extra"]
