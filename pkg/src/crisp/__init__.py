"""Hierarchical goal-conditioned RL with primitive-informed demonstration parsing."""
from .core import ConfigError, ContractError, GoalEnv, InvalidStateError, batch_sparse_reward, sparse_reward

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "GoalEnv",
    "InvalidStateError",
    "batch_sparse_reward",
    "sparse_reward",
]
