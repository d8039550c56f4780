"""DQN pieces: replay buffer, epsilon-greedy behaviour, multi-head TD targets, learner update."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .netcore import (
    FeaturePartition,
    NetworkParams,
    OptimizerState,
    backward_masked,
    forward,
    rmsprop_update,
    sync_target,
)


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    terminal: bool


class Batch(NamedTuple):
    obs: np.ndarray        # (B, obs_dim)
    action: np.ndarray     # (B,)
    reward: np.ndarray     # (B,)
    next_obs: np.ndarray   # (B, obs_dim)
    terminal: np.ndarray   # (B,) bool


class BufferWarmingUp(RuntimeError):
    """Raised when sampling more transitions than the buffer holds."""


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling (with replacement)."""

    def __init__(self, capacity: int, obs_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._obs = np.zeros((capacity, obs_dim))
        self._next_obs = np.zeros((capacity, obs_dim))
        self._action = np.zeros(capacity, dtype=np.int64)
        self._reward = np.zeros(capacity)
        self._terminal = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, t: Transition) -> None:
        if not np.isfinite(t.reward):
            raise ValueError("reward must be finite")
        i = self._next
        self._obs[i] = t.obs
        self._next_obs[i] = t.next_obs
        self._action[i] = t.action
        self._reward[i] = t.reward
        self._terminal[i] = t.terminal
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self._size < batch_size:
            raise BufferWarmingUp(f"buffer holds {self._size} transitions, need {batch_size}")
        idx = rng.integers(0, self._size, size=batch_size)
        return self.batch_at(idx)

    def batch_at(self, idx) -> Batch:
        return Batch(self._obs[idx], self._action[idx], self._reward[idx],
                     self._next_obs[idx], self._terminal[idx])

    def transitions(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        start = self._next if self._size == self.capacity else 0
        order = [(start + k) % self.capacity for k in range(self._size)]
        return [Transition(self._obs[i].copy(), int(self._action[i]), float(self._reward[i]),
                           self._next_obs[i].copy(), bool(self._terminal[i])) for i in order]


@dataclass
class LearnerConfig:
    step_size: float = 0.0025
    gamma: float = 0.99
    gamma_aux: float = 1.0
    batch_size: int = 16
    target_sync: int = 100
    epsilon: float = 0.1
    buffer_capacity: int = 500
    rms_decay: float = 0.99
    rms_eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if not 0.0 <= self.gamma_aux <= 1.0:
            raise ValueError("gamma_aux must be in [0, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if self.batch_size < 1 or self.batch_size > self.buffer_capacity:
            raise ValueError("batch_size must be in [1, buffer_capacity]")
        if self.target_sync < 1:
            raise ValueError("target_sync must be >= 1")


def epsilon_greedy(q_main: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Greedy on ``q_main`` with uniform tie-breaking; uniform action with probability epsilon."""
    n = q_main.shape[0]
    if rng.random() < epsilon:
        return int(rng.integers(n))
    best = np.flatnonzero(q_main == q_main.max())
    if best.size == 1:
        return int(best[0])
    return int(best[rng.integers(best.size)])


def compute_targets(batch: Batch, target_params: NetworkParams, tasks: Sequence,
                    gamma_main: float, gamma_aux: float = 1.0) -> np.ndarray:
    """TD targets for every head, shape ``(B, n_heads)``.

    Main head: ``r + gamma_main * max_a q0(s', a)``. Auxiliary head of a
    subgoal task: cumulant -1 plus ``gamma_aux * max_a q_i(s', a)``, with the
    continuation cut to zero at the subgoal. Environment termination stops
    bootstrapping for every head. Heads without a task get target 0 and are
    never trained (their loss is masked out by :func:`dqn_loss_grad`).
    """
    _, q_next = forward(target_params, batch.next_obs)
    max_next = q_next.max(axis=2)                          # (B, heads)
    alive = 1.0 - batch.terminal.astype(float)
    targets = np.zeros_like(max_next)
    targets[:, 0] = batch.reward + gamma_main * alive * max_next[:, 0]
    for task in tasks:
        reached = task.subgoal.reached(batch.next_obs)
        cont = gamma_aux * alive * (1.0 - reached.astype(float))
        targets[:, task.head] = -1.0 + cont * max_next[:, task.head]
    return targets


def dqn_loss_grad(q: np.ndarray, actions: np.ndarray, targets: np.ndarray,
                  active_heads: Sequence[int]) -> tuple[float, np.ndarray]:
    """Mean-over-batch squared TD loss on the taken action only.

    Returns ``(loss, dloss_dq)`` with ``loss = sum_heads mean_b 0.5 * delta^2``.
    """
    batch = q.shape[0]
    rows = np.arange(batch)
    heads = np.asarray(active_heads, dtype=np.int64)
    q_taken = q[rows[:, None], heads[None, :], actions[:, None]]      # (B, k)
    delta = q_taken - targets[:, heads]
    dq = np.zeros_like(q)
    dq[rows[:, None], heads[None, :], actions[:, None]] = delta / batch
    loss = 0.5 * float(np.mean(delta ** 2, axis=0).sum())
    return loss, dq


@dataclass
class DQNLearner:
    """Online network, target network, optimiser and replay buffer of one run."""

    params: NetworkParams
    partition: FeaturePartition
    config: LearnerConfig
    opt: OptimizerState = None
    target: NetworkParams = None
    buffer: ReplayBuffer = None
    n_updates: int = 0
    n_syncs: int = 0
    last_loss: float = field(default=float("nan"))

    def __post_init__(self):
        if self.opt is None:
            self.opt = OptimizerState.zeros_like(self.params, self.config.rms_decay, self.config.rms_eps)
        if self.target is None:
            self.target = sync_target(self.params)
        if self.buffer is None:
            self.buffer = ReplayBuffer(self.config.buffer_capacity, self.params.obs_dim)

    def act(self, q_main: np.ndarray, rng: np.random.Generator) -> int:
        return epsilon_greedy(q_main, self.config.epsilon, rng)

    def ready(self) -> bool:
        return len(self.buffer) >= self.config.batch_size

    def dqn_step(self, tasks: Sequence, rng: np.random.Generator) -> float:
        """One minibatch update of every head; syncs the target net every ``target_sync`` updates."""
        cfg = self.config
        batch = self.buffer.sample(cfg.batch_size, rng)
        loss = self.update_on(batch, tasks)
        self.n_updates += 1
        if self.n_updates % cfg.target_sync == 0:
            self.target = sync_target(self.params)
            self.n_syncs += 1
        return loss

    def update_on(self, batch: Batch, tasks: Sequence) -> float:
        cfg = self.config
        targets = compute_targets(batch, self.target, tasks, cfg.gamma, cfg.gamma_aux)
        features, q = forward(self.params, batch.obs)
        heads = [0] + [t.head for t in tasks]
        loss, dq = dqn_loss_grad(q, batch.action, targets, heads)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite TD loss after {self.n_updates} updates")
        grads = backward_masked(self.params, batch.obs, features, dq, self.partition)
        rmsprop_update(self.params, grads, self.opt, cfg.step_size)
        self.last_loss = loss
        return loss
