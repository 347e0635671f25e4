"""Multi-agent PPO with macro/local actor-critic pairs under centralised training."""

from .buffer import Actor, EpisodeRecord, RolloutBuffer, collect_rollout, run_episode
from .checkpoint import CheckpointError, load_checkpoint, read_meta, save_checkpoint
from .losses import DivergenceError, actor_loss, critic_loss, gae
from .policy import CriticHeads, ModelConfig, PolicyHeads, SamarlModel
from .trainer import TrainConfig, build_model, compute_losses, evaluate, held_out_seeds, save_model, train, update

__all__ = [
    "Actor",
    "EpisodeRecord",
    "RolloutBuffer",
    "collect_rollout",
    "run_episode",
    "CheckpointError",
    "load_checkpoint",
    "read_meta",
    "save_checkpoint",
    "DivergenceError",
    "actor_loss",
    "critic_loss",
    "gae",
    "CriticHeads",
    "ModelConfig",
    "PolicyHeads",
    "SamarlModel",
    "TrainConfig",
    "build_model",
    "compute_losses",
    "evaluate",
    "held_out_seeds",
    "save_model",
    "train",
    "update",
]
