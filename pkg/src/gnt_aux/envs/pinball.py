"""Continuous pinball domain with simplified ball physics.

The ball is a point moving in the unit square. Each action adds an impulse to
one velocity component (or does nothing), then the ball is integrated over a
fixed number of sub-steps. Crossing an obstacle edge reflects the velocity
about that edge. Drag is applied once per action.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

INC_X, DEC_X, INC_Y, DEC_Y, NOP = range(5)

_BOX = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
_MAX_BOUNCES = 8


@dataclass(frozen=True)
class PinballSubgoal:
    x: float
    y: float
    radius: float = 0.035

    def reached(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs)
        return np.hypot(obs[..., 0] - self.x, obs[..., 1] - self.y) <= self.radius

    def key(self) -> str:
        return f"{self.x:.4f}_{self.y:.4f}"


@dataclass
class PinballConfig:
    start: tuple[float, float] = (0.8, 0.5)
    goal: tuple[float, float] = (0.1, 0.1)
    goal_radius: float = 0.04
    drag: float = 0.995
    substeps: int = 20
    substep_dt: float = 0.001
    impulse: float = 0.2
    max_speed: float = 1.0
    step_reward: float = -5.0
    polygons: list[np.ndarray] = field(default_factory=list)
    good_subgoals: list[tuple[float, float]] = field(default_factory=list)
    bad_subgoals: list[tuple[float, float]] = field(default_factory=list)

    @classmethod
    def from_text(cls, text: str) -> "PinballConfig":
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, *vals = line.split()
            nums = [float(v) for v in vals]
            if key == "polygon":
                if len(nums) < 6 or len(nums) % 2:
                    raise ValueError(f"line {lineno}: polygon needs >= 3 vertex pairs")
                cfg.polygons.append(np.array(nums).reshape(-1, 2))
            elif key == "start":
                cfg.start = (nums[0], nums[1])
            elif key == "goal":
                cfg.goal = (nums[0], nums[1])
                if len(nums) > 2:
                    cfg.goal_radius = nums[2]
            elif key == "good_subgoal":
                cfg.good_subgoals.append((nums[0], nums[1]))
            elif key == "bad_subgoal":
                cfg.bad_subgoals.append((nums[0], nums[1]))
            elif key == "substeps":
                cfg.substeps = int(nums[0])
            elif key in ("drag", "substep_dt", "impulse", "max_speed", "step_reward", "goal_radius"):
                setattr(cfg, key, nums[0])
            else:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
        return cfg

    @classmethod
    def from_file(cls, path) -> "PinballConfig":
        return cls.from_text(Path(path).read_text())


def point_in_polygon(point, poly: np.ndarray) -> bool:
    """Strict interior test (even-odd rule); points on an edge count as outside."""
    x, y = point
    xs, ys = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(xs, -1), np.roll(ys, -1)
    # on-edge check
    cross = (xn - xs) * (y - ys) - (yn - ys) * (x - xs)
    within = ((np.minimum(xs, xn) - 1e-12 <= x) & (x <= np.maximum(xs, xn) + 1e-12)
              & (np.minimum(ys, yn) - 1e-12 <= y) & (y <= np.maximum(ys, yn) + 1e-12))
    if np.any((np.abs(cross) <= 1e-12) & within):
        return False
    straddle = (ys > y) != (yn > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = xs + (y - ys) * (xn - xs) / (yn - ys)
    return bool(np.count_nonzero(straddle & (x < x_cross)) % 2)


def polygon_distance(point, poly: np.ndarray) -> float:
    """Euclidean distance from ``point`` to the boundary of ``poly``."""
    p = np.asarray(point, dtype=float)
    a = poly
    b = np.roll(poly, -1, axis=0)
    e = b - a
    t = np.clip(np.einsum("ij,ij->i", p - a, e) / np.einsum("ij,ij->i", e, e), 0.0, 1.0)
    closest = a + t[:, None] * e
    return float(np.min(np.hypot(*(closest - p).T)))


class Pinball:
    n_actions = 5
    obs_dim = 4

    def __init__(self, config: PinballConfig | None = None, max_episode_steps: int | None = None,
                 name: str = "pinball"):
        self.config = config or PinballConfig()
        self.name = name
        self.max_episode_steps = max_episode_steps
        segs_a, segs_b = [], []
        for poly in [_BOX] + list(self.config.polygons):
            segs_a.append(poly)
            segs_b.append(np.roll(poly, -1, axis=0))
        self._seg_a = np.concatenate(segs_a)
        self._seg_e = np.concatenate(segs_b) - self._seg_a
        polys = list(self.config.polygons)
        self._bbox_lo = np.array([q.min(axis=0) for q in polys]).reshape(-1, 2)
        self._bbox_hi = np.array([q.max(axis=0) for q in polys]).reshape(-1, 2)
        if not self.is_free(self.config.start):
            raise ValueError("start position is inside an obstacle")
        self.pos = np.array(self.config.start, dtype=float)
        self.vel = np.zeros(2)
        self.t = 0

    @classmethod
    def from_file(cls, path, **kwargs) -> "Pinball":
        return cls(PinballConfig.from_file(path), **kwargs)

    def is_free(self, point) -> bool:
        x, y = point
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            return False
        p = np.asarray(point, dtype=float)
        # only polygons whose bounding box contains the point can contain it
        near = np.flatnonzero(np.all((self._bbox_lo <= p) & (p <= self._bbox_hi), axis=1))
        return not any(point_in_polygon(p, self.config.polygons[i]) for i in near)

    def reset(self, rng: np.random.Generator | None = None) -> np.ndarray:
        self.pos = np.array(self.config.start, dtype=float)
        self.vel = np.zeros(2)
        self.t = 0
        return self.observe()

    def set_state(self, x: float, y: float, vx: float, vy: float) -> None:
        self.pos = np.array([x, y], dtype=float)
        self.vel = np.array([vx, vy], dtype=float)

    def observe(self) -> np.ndarray:
        s = self.config.max_speed
        return np.array([self.pos[0], self.pos[1],
                         (self.vel[0] + s) / (2 * s), (self.vel[1] + s) / (2 * s)])

    def subgoal(self, xy, radius: float = 0.035) -> PinballSubgoal:
        return PinballSubgoal(float(xy[0]), float(xy[1]), radius)

    def parse_subgoal(self, key: str) -> PinballSubgoal:
        x, y = key.split("_")
        return self.subgoal((float(x), float(y)))

    def sample_subgoal(self, rng: np.random.Generator) -> PinballSubgoal:
        while True:
            xy = rng.random(2)
            if self.is_free(xy):
                return self.subgoal(xy)

    def at_goal(self) -> bool:
        gx, gy = self.config.goal
        return np.hypot(self.pos[0] - gx, self.pos[1] - gy) <= self.config.goal_radius

    def _first_hit(self, p: np.ndarray, d: np.ndarray):
        a, e = self._seg_a, self._seg_e
        denom = d[0] * e[:, 1] - d[1] * e[:, 0]
        ap = a - p
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (ap[:, 0] * e[:, 1] - ap[:, 1] * e[:, 0]) / denom
            s = (ap[:, 0] * d[1] - ap[:, 1] * d[0]) / denom
        valid = (denom != 0) & (t > 1e-12) & (t <= 1.0) & (s >= 0.0) & (s <= 1.0)
        if not valid.any():
            return None
        idx = np.flatnonzero(valid)
        k = idx[np.argmin(t[idx])]
        return t[k], e[k]

    def _substep(self) -> None:
        dt = self.config.substep_dt
        start = self.pos.copy()
        p, v = self.pos.copy(), self.vel.copy()
        remaining = 1.0
        for _ in range(_MAX_BOUNCES):
            d = v * dt * remaining
            if not d.any():
                break
            hit = self._first_hit(p, d)
            if hit is None:
                p = p + d
                break
            t, e = hit
            p = p + d * (t * (1.0 - 1e-6))
            n = np.array([-e[1], e[0]]) / np.hypot(*e)
            v = v - 2.0 * np.dot(v, n) * n
            remaining *= 1.0 - t
        s = self.config.max_speed
        v = np.clip(v, -s, s)
        if not self.is_free(p):
            # numerical corner case (e.g. exact vertex hit): bounce back in place
            p, v = start, -self.vel
        self.pos, self.vel = p, v

    def step(self, action: int) -> tuple[np.ndarray, float, bool, bool]:
        """Return ``(next_obs, reward, terminal, truncated)``."""
        if action not in range(5):
            raise ValueError(f"invalid action {action}")
        cfg = self.config
        if action == INC_X:
            self.vel[0] += cfg.impulse
        elif action == DEC_X:
            self.vel[0] -= cfg.impulse
        elif action == INC_Y:
            self.vel[1] += cfg.impulse
        elif action == DEC_Y:
            self.vel[1] -= cfg.impulse
        self.vel = np.clip(self.vel, -cfg.max_speed, cfg.max_speed)
        terminal = False
        for _ in range(cfg.substeps):
            self._substep()
            if self.at_goal():
                terminal = True
                break
        self.vel = self.vel * cfg.drag
        self.t += 1
        truncated = (not terminal and self.max_episode_steps is not None
                     and self.t >= self.max_episode_steps)
        return self.observe(), cfg.step_reward, terminal, truncated
