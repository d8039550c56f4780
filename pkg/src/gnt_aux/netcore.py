"""One-hidden-layer multi-headed value network with Master-User gradient routing.

All heads read the same tanh feature vector in the forward pass. In the
backward pass each hidden feature's input weights only receive the gradient
coming from the head that owns it (see :class:`FeaturePartition`).

Head 0 is the main task; heads 1..n are auxiliary tasks.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np


@dataclass
class NetworkParams:
    input_weights: np.ndarray   # (obs_dim, hidden_dim)
    input_bias: np.ndarray      # (hidden_dim,)
    output_weights: np.ndarray  # (n_heads, hidden_dim, n_actions)
    output_bias: np.ndarray     # (n_heads, n_actions)

    @property
    def obs_dim(self) -> int:
        return self.input_weights.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.input_weights.shape[1]

    @property
    def n_heads(self) -> int:
        return self.output_weights.shape[0]

    @property
    def n_actions(self) -> int:
        return self.output_weights.shape[2]

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "input_weights": self.input_weights,
            "input_bias": self.input_bias,
            "output_weights": self.output_weights,
            "output_bias": self.output_bias,
        }

    def copy(self) -> "NetworkParams":
        return NetworkParams(**{k: v.copy() for k, v in self.arrays().items()})


# Gradients share the parameter layout.
Gradients = NetworkParams


@dataclass
class OptimizerState:
    """RMSProp accumulators (running mean of squared gradients), no momentum."""

    sq_avg: NetworkParams
    decay: float = 0.99
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: NetworkParams, decay: float = 0.99, eps: float = 1e-8) -> "OptimizerState":
        zeros = NetworkParams(**{k: np.zeros_like(v) for k, v in params.arrays().items()})
        return cls(zeros, decay, eps)


class FeaturePartition:
    """Owner task index of every hidden feature (0 = main task)."""

    def __init__(self, owner):
        owner = np.asarray(owner, dtype=np.int64)
        if owner.ndim != 1 or owner.size == 0:
            raise ValueError("owner must be a non-empty 1-D array")
        if owner.min() < 0:
            raise ValueError("owner indices must be non-negative")
        self.owner = owner

    @classmethod
    def equal_split(cls, hidden_dim: int, n_aux: int) -> "FeaturePartition":
        """Contiguous blocks of floor(h/(n+1)) features per task; main absorbs the remainder."""
        block = hidden_dim // (n_aux + 1)
        if block < 1:
            raise ValueError(f"hidden_dim={hidden_dim} too small for {n_aux} auxiliary tasks")
        owner = np.zeros(hidden_dim, dtype=np.int64)
        for task in range(1, n_aux + 1):
            owner[task * block:(task + 1) * block] = task
        return cls(owner)

    @property
    def hidden_dim(self) -> int:
        return self.owner.size

    def features_of(self, task: int) -> np.ndarray:
        return np.flatnonzero(self.owner == task)

    def __eq__(self, other) -> bool:
        return isinstance(other, FeaturePartition) and np.array_equal(self.owner, other.owner)

    def __repr__(self) -> str:
        counts = np.bincount(self.owner)
        return f"FeaturePartition(hidden_dim={self.hidden_dim}, features_per_task={counts.tolist()})"


def _init_input_columns(rng: np.random.Generator, obs_dim: int, n_cols: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(obs_dim)
    return rng.uniform(-bound, bound, size=(obs_dim, n_cols))


def init_params(obs_dim: int, hidden_dim: int, n_actions: int, n_heads: int,
                rng: np.random.Generator) -> NetworkParams:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases."""
    for name, value in (("obs_dim", obs_dim), ("hidden_dim", hidden_dim),
                        ("n_actions", n_actions), ("n_heads", n_heads)):
        if int(value) < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")
    w_in = _init_input_columns(rng, obs_dim, hidden_dim)
    bound = 1.0 / np.sqrt(hidden_dim)
    w_out = rng.uniform(-bound, bound, size=(n_heads, hidden_dim, n_actions))
    return NetworkParams(
        input_weights=w_in,
        input_bias=np.zeros(hidden_dim),
        output_weights=w_out,
        output_bias=np.zeros((n_heads, n_actions)),
    )


def forward(params: NetworkParams, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(features, q)``.

    ``obs`` may be a single observation ``(obs_dim,)`` or a batch
    ``(B, obs_dim)``; ``q`` then has shape ``(n_heads, n_actions)`` or
    ``(B, n_heads, n_actions)``.
    """
    obs = np.asarray(obs, dtype=float)
    if obs.shape[-1] != params.obs_dim:
        raise ValueError(f"observation has length {obs.shape[-1]}, expected {params.obs_dim}")
    features = np.tanh(obs @ params.input_weights + params.input_bias)
    n_heads, hidden, n_actions = params.output_weights.shape
    w = params.output_weights.transpose(1, 0, 2).reshape(hidden, n_heads * n_actions)
    q = (features @ w).reshape(features.shape[:-1] + (n_heads, n_actions)) + params.output_bias
    return features, q


def backward_masked(params: NetworkParams, obs: np.ndarray, features: np.ndarray,
                    dloss_dq: np.ndarray, partition: FeaturePartition) -> Gradients:
    """Backprop ``dloss_dq`` with per-feature gradient routing.

    Output weights of head j get head j's gradient only. The input weights and
    bias of feature k get only the contribution backpropagated through the
    head ``partition.owner[k]``.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    features = np.atleast_2d(features)
    dloss_dq = np.asarray(dloss_dq, dtype=float)
    if dloss_dq.ndim == 2:
        dloss_dq = dloss_dq[None]
    batch = obs.shape[0]
    if dloss_dq.shape != (batch, params.n_heads, params.n_actions):
        raise ValueError(f"dloss_dq has shape {dloss_dq.shape}, expected "
                         f"{(batch, params.n_heads, params.n_actions)}")
    if features.shape != (batch, params.hidden_dim):
        raise ValueError("features do not match the batch/hidden dimensions")
    owner = partition.owner
    if owner.size != params.hidden_dim or owner.max() >= params.n_heads:
        raise ValueError("partition does not match the network")

    n_heads, hidden, n_actions = params.output_weights.shape
    d_w_out = (features.T @ dloss_dq.reshape(batch, n_heads * n_actions))
    d_w_out = d_w_out.reshape(hidden, n_heads, n_actions).transpose(1, 0, 2)
    d_b_out = dloss_dq.sum(axis=0)

    owner_w = params.output_weights[owner, np.arange(hidden), :]   # (H, A)
    owner_dq = dloss_dq[:, owner, :]                               # (B, H, A)
    d_features = (owner_dq * owner_w).sum(axis=2)
    d_pre = d_features * (1.0 - features ** 2)
    return Gradients(
        input_weights=obs.T @ d_pre,
        input_bias=d_pre.sum(axis=0),
        output_weights=d_w_out,
        output_bias=d_b_out,
    )


def rmsprop_update(params: NetworkParams, grads: Gradients, opt: OptimizerState,
                   step_size: float) -> None:
    """In-place RMSProp step on ``params`` and ``opt``."""
    g_arrays = grads.arrays()
    for name, g in g_arrays.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name}; learner diverged")
    p_arrays = params.arrays()
    s_arrays = opt.sq_avg.arrays()
    for name, g in g_arrays.items():
        acc = s_arrays[name]
        if acc.shape != g.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        acc *= opt.decay
        acc += (1.0 - opt.decay) * g * g
        p_arrays[name] -= step_size * g / (np.sqrt(acc) + opt.eps)


def reinit_features(params: NetworkParams, opt: OptimizerState, feature_indices,
                    rng: np.random.Generator) -> None:
    """Redraw incoming weights of the given features and zero their outgoing weights in every head.

    Optimizer accumulators of every touched parameter are reset to zero.
    """
    idx = np.unique(np.asarray(list(feature_indices), dtype=np.int64))
    if idx.size == 0:
        return
    if idx.min() < 0 or idx.max() >= params.hidden_dim:
        raise IndexError("feature index out of range")
    params.input_weights[:, idx] = _init_input_columns(rng, params.obs_dim, idx.size)
    params.input_bias[idx] = 0.0
    params.output_weights[:, idx, :] = 0.0
    acc = opt.sq_avg
    acc.input_weights[:, idx] = 0.0
    acc.input_bias[idx] = 0.0
    acc.output_weights[:, idx, :] = 0.0


def sync_target(params: NetworkParams) -> NetworkParams:
    return copy.deepcopy(params)
