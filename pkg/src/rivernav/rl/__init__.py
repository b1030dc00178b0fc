"""Value-network machinery: bootstrapped Q-network, Adam, replay memory,
DQN and kernel-test targets, and the training loop."""

from rivernav.rl.agent import (
    Agent,
    TrainConfig,
    TrainingDiverged,
    epsilon_at,
    read_curve,
    select_action_greedy,
    select_action_train,
    train,
    write_curve,
)
from rivernav.rl.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from rivernav.rl.network import BootstrappedNet, ShapeError
from rivernav.rl.optim import Adam, AdamConfig, adam_step
from rivernav.rl.replay import ReplayBuffer, draw_mask
from rivernav.rl.targets import dqn_target, ensemble_variance, keb_statistic, keb_target, keb_weights

__all__ = [
    "Adam", "AdamConfig", "Agent", "BootstrappedNet", "CheckpointError", "ReplayBuffer", "ShapeError",
    "TrainConfig", "TrainingDiverged", "adam_step", "dqn_target", "draw_mask", "ensemble_variance", "epsilon_at",
    "keb_statistic", "keb_target", "keb_weights", "load_checkpoint", "read_curve", "save_checkpoint",
    "select_action_greedy", "select_action_train", "train", "write_curve",
]
