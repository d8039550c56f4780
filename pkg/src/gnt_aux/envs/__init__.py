"""Evaluation environments: four-rooms, maze and pinball."""

from __future__ import annotations

import json
import os
from importlib import resources
from pathlib import Path

from .gridworld import GridSubgoal, GridWorld
from .pinball import Pinball, PinballConfig, PinballSubgoal

ENV_NAMES = ("fourrooms", "maze", "pinball")


def data_path(filename: str):
    return resources.files(__package__).joinpath("data", filename)


def _read(path) -> str:
    if isinstance(path, (str, os.PathLike)):
        path = Path(path)
    return path.read_text()


def make_env(name: str, map_file=None, cutoff: int | None = 500, max_episode_steps: int | None = None):
    """Build an environment by name; ``map_file`` overrides the packaged layout."""
    if name in ("fourrooms", "maze"):
        path = map_file or data_path(f"{name}.txt")
        return GridWorld.from_text(_read(path), cutoff=cutoff, name=name)
    if name == "pinball":
        path = map_file or data_path("pinball.cfg")
        return Pinball(PinballConfig.from_text(_read(path)), max_episode_steps=max_episode_steps)
    raise ValueError(f"unknown environment {name!r}; expected one of {ENV_NAMES}")


def hand_designed_subgoals(env, quality: str, tasks_file=None) -> list:
    """Subgoals of the hand-designed good (hallway-like) or bad (corner-like) tasks."""
    if quality not in ("good", "bad"):
        raise ValueError(f"quality must be 'good' or 'bad', got {quality!r}")
    if isinstance(env, Pinball):
        coords = env.config.good_subgoals if quality == "good" else env.config.bad_subgoals
        return [env.subgoal(xy) for xy in coords]
    if isinstance(env, GridWorld):
        path = tasks_file or data_path("hand_tasks.json")
        table = json.loads(_read(path))
        if env.name not in table:
            raise ValueError(f"no hand-designed tasks for environment {env.name!r}")
        return [env.subgoal(tuple(cell)) for cell in table[env.name][quality]]
    raise ValueError(f"unsupported environment {env!r}")


def hand_designed_tasks(env, quality: str, tasks_file=None):
    from ..auxdiscovery import AuxTask

    subgoals = hand_designed_subgoals(env, quality, tasks_file)
    return [AuxTask(task_id=i + 1, subgoal=sg) for i, sg in enumerate(subgoals)]


__all__ = [
    "ENV_NAMES",
    "GridSubgoal",
    "GridWorld",
    "Pinball",
    "PinballConfig",
    "PinballSubgoal",
    "data_path",
    "hand_designed_subgoals",
    "hand_designed_tasks",
    "make_env",
]
