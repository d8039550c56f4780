"""Generate-and-test discovery of auxiliary subgoal-reaching tasks.

The generator proposes subgoal tasks uniformly over the environment's
observation space. The tester scores each hidden feature by how much it
feeds the main head (instantaneous utility, then an exponential trace), and
scores an auxiliary task by summing the traces of the features it owns.
Every ``T`` steps the lowest-scoring old-enough tasks are swapped for fresh
ones and their features are reinitialised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .netcore import FeaturePartition, NetworkParams, OptimizerState, reinit_features


@dataclass
class AuxTask:
    """Subgoal-reaching GVF: cumulant -1, continuation 0 at the subgoal, greedy policy."""

    task_id: int
    subgoal: Any
    age: int = 0

    @property
    def head(self) -> int:
        return self.task_id


@dataclass
class GntConfig:
    n_tasks: int = 8
    age_threshold: int = 0
    replacement_cycle: int = 1000
    replacement_ratio: float = 0.25
    tau: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.replacement_ratio <= 1.0:
            raise ValueError("replacement_ratio must be in (0, 1]")
        if self.n_tasks * self.replacement_ratio < 1.0:
            raise ValueError("n_tasks * replacement_ratio must be >= 1")
        if self.replacement_cycle < 1:
            raise ValueError("replacement_cycle must be >= 1")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")

    @property
    def n_replace(self) -> int:
        return max(1, int(np.floor(self.n_tasks * self.replacement_ratio + 1e-9)))


@dataclass
class TesterState:
    traces: np.ndarray
    tau: float = 0.05

    @classmethod
    def zeros(cls, hidden_dim: int, tau: float = 0.05) -> "TesterState":
        if not 0.0 < tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        return cls(np.zeros(hidden_dim), tau)


@dataclass
class ReplacementEvent:
    step: int
    task_id: int
    utility: float
    age: int
    replaced_subgoal: Any
    new_subgoal: Any


def generate_task(env, rng: np.random.Generator, task_id: int) -> AuxTask:
    """Random generator: a subgoal drawn uniformly from the environment's free space."""
    return AuxTask(task_id=task_id, subgoal=env.sample_subgoal(rng))


def instantaneous_utility(features: np.ndarray, main_output_weights: np.ndarray) -> np.ndarray:
    """``u_k = sum_a |w_ka * f_k|`` against the main head's outgoing weights.

    ``main_output_weights`` has shape ``(hidden_dim, n_actions)``.
    """
    return np.abs(features) * np.abs(main_output_weights).sum(axis=-1)


def update_traces(tester: TesterState, u: np.ndarray) -> None:
    tester.traces *= 1.0 - tester.tau
    tester.traces += tester.tau * u


def task_utility(tester: TesterState, partition: FeaturePartition, task_id: int) -> float:
    owned = partition.features_of(task_id)
    if owned.size == 0:
        raise ValueError(f"task {task_id} owns no features; check hidden_dim vs number of tasks")
    return float(tester.traces[owned].sum())


def task_utilities(tester: TesterState, partition: FeaturePartition, n_tasks: int) -> np.ndarray:
    """Utilities of tasks ``1..n_tasks`` as one array (index 0 is task 1)."""
    sums = np.bincount(partition.owner, weights=tester.traces, minlength=n_tasks + 1)
    return sums[1:n_tasks + 1]


def tick_ages(tasks: list[AuxTask]) -> None:
    for task in tasks:
        task.age += 1


def select_for_replacement(tasks: list[AuxTask], utilities: dict[int, float], n_replace: int,
                           age_threshold: int) -> list[AuxTask]:
    """Lowest-utility tasks with ``age > age_threshold``; ties go to the lower task id."""
    eligible = [t for t in tasks if t.age > age_threshold]
    eligible.sort(key=lambda t: (utilities[t.task_id], t.task_id))
    return eligible[:n_replace]


def replacement_step(tasks: list[AuxTask], tester: TesterState, partition: FeaturePartition,
                     params: NetworkParams, opt: OptimizerState, cfg: GntConfig, step: int,
                     env, rng: np.random.Generator,
                     init_rng: np.random.Generator | None = None) -> list[ReplacementEvent]:
    """Swap out the weakest eligible tasks when ``step`` is a multiple of the replacement cycle.

    Mutates ``tasks`` (in place, same task ids and heads), ``params``, ``opt``
    and ``tester``. ``rng`` drives the generator; ``init_rng`` (defaults to
    ``rng``) draws the fresh input weights.
    """
    if step <= 0 or step % cfg.replacement_cycle != 0:
        return []
    init_rng = rng if init_rng is None else init_rng
    utilities = {t.task_id: task_utility(tester, partition, t.task_id) for t in tasks}
    chosen = select_for_replacement(tasks, utilities, cfg.n_replace, cfg.age_threshold)
    events = []
    for task in chosen:
        new = generate_task(env, rng, task.task_id)
        events.append(ReplacementEvent(step, task.task_id, utilities[task.task_id], task.age,
                                       task.subgoal, new.subgoal))
        task.subgoal = new.subgoal
        task.age = 0
        owned = partition.features_of(task.task_id)
        reinit_features(params, opt, owned, init_rng)
        tester.traces[owned] = 0.0
    return events


@dataclass
class GenerateAndTest:
    """Tester and replacement controller bundled for the per-step loop."""

    tasks: list[AuxTask]
    partition: FeaturePartition
    tester: TesterState
    cfg: GntConfig | None = None
    replace: bool = True
    events: list[ReplacementEvent] = field(default_factory=list)

    def observe(self, features: np.ndarray, params: NetworkParams) -> None:
        """Per-step tester update from the current feature vector."""
        update_traces(self.tester, instantaneous_utility(features, params.output_weights[0]))

    def utilities(self) -> np.ndarray:
        return task_utilities(self.tester, self.partition, len(self.tasks))

    def after_step(self, step: int, features: np.ndarray, params: NetworkParams, opt: OptimizerState,
                   env, gen_rng: np.random.Generator,
                   init_rng: np.random.Generator) -> list[ReplacementEvent]:
        """Age the tasks, update the tester, then replace if this is a cycle boundary."""
        tick_ages(self.tasks)
        self.observe(features, params)
        if not self.replace or self.cfg is None:
            return []
        new_events = replacement_step(self.tasks, self.tester, self.partition, params, opt,
                                      self.cfg, step, env, gen_rng, init_rng)
        self.events.extend(new_events)
        return new_events
