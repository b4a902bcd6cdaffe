"""Replay memory, Q-network and the training loop."""

from .memory import PendingBook, PendingTransition, ReplayMemory
from .network import QNetwork, TrainingDiverged, train_batch
from .train import EpsilonSchedule, TrainConfig, Trainer, epsilon, parse_train_config, train

__all__ = [
    "EpsilonSchedule",
    "PendingBook",
    "PendingTransition",
    "QNetwork",
    "ReplayMemory",
    "TrainConfig",
    "Trainer",
    "TrainingDiverged",
    "epsilon",
    "parse_train_config",
    "train",
    "train_batch",
]
