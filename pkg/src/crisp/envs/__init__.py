"""Desk-scale environments."""
from .blockpush import BlockPushEnv
from .maze import MazeEnv, MazeSpec, free_components, generate_maze, load_mazes, open_room, save_mazes
from .point import LineEnv, PointEnv
from .rope import POKE_LENGTH, RopeEnv

__all__ = [
    "BlockPushEnv",
    "LineEnv",
    "MazeEnv",
    "MazeSpec",
    "POKE_LENGTH",
    "PointEnv",
    "RopeEnv",
    "free_components",
    "generate_maze",
    "load_mazes",
    "make_env",
    "open_room",
    "save_mazes",
]


def make_env(name: str, **kwargs):
    table = {
        "maze": MazeEnv,
        "point": PointEnv,
        "blockpush": BlockPushEnv,
        "rope": RopeEnv,
        "line": LineEnv,
    }
    if name not in table:
        raise KeyError(f"unknown environment {name!r}; choose from {sorted(table)}")
    return table[name](**kwargs)
