"""Training loop, evaluation, sweeps and plots."""
from .config import RunConfig, load_config, parse_config
from .trainer import Trainer, TrainingAborted, build_env, flat_episode, train

__all__ = ["RunConfig", "Trainer", "TrainingAborted", "build_env", "flat_episode", "load_config", "parse_config", "train"]
