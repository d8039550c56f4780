"""Deterministic gridworlds loaded from ASCII maps.

Map format: ``#`` wall, ``.`` free, ``S`` start, ``G`` goal, one row per line.
Observations are one-hot over the free cells in row-major order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

UP, DOWN, LEFT, RIGHT = range(4)
MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}

Cell = tuple[int, int]


@dataclass(frozen=True)
class GridSubgoal:
    """A single grid cell; ``index`` is its position in the one-hot observation."""

    cell: Cell
    index: int

    def reached(self, obs: np.ndarray) -> np.ndarray:
        return np.asarray(obs)[..., self.index] > 0.5

    def key(self) -> str:
        return f"{self.cell[0]}_{self.cell[1]}"


def parse_map(text: str) -> tuple[np.ndarray, Cell, Cell]:
    rows = [line.rstrip("\n") for line in text.splitlines() if line.strip()]
    width = max(len(r) for r in rows)
    walls = np.ones((len(rows), width), dtype=bool)
    start = goal = None
    for r, line in enumerate(rows):
        for c, ch in enumerate(line):
            if ch == "#":
                continue
            if ch not in ".SG":
                raise ValueError(f"unknown map character {ch!r} at row {r}, col {c}")
            walls[r, c] = False
            if ch == "S":
                start = (r, c)
            elif ch == "G":
                goal = (r, c)
    if start is None or goal is None:
        raise ValueError("map needs exactly one S and one G")
    return walls, start, goal


class GridWorld:
    """Episodic gridworld: reward -1 per step, terminal at the goal, truncation at ``cutoff``."""

    n_actions = 4

    def __init__(self, walls: np.ndarray, start: Cell, goal: Cell, cutoff: int = 500, name: str = "grid"):
        self.walls = np.asarray(walls, dtype=bool)
        self.name = name
        self.start = tuple(start)
        self.goal = tuple(goal)
        self.cutoff = cutoff
        self.free_cells: list[Cell] = [tuple(map(int, rc)) for rc in np.argwhere(~self.walls)]
        self._index = {cell: i for i, cell in enumerate(self.free_cells)}
        for cell in (self.start, self.goal):
            if cell not in self._index:
                raise ValueError(f"{cell} is not a free cell")
        self.obs_dim = len(self.free_cells)
        self.pos = self.start
        self.t = 0

    @classmethod
    def from_text(cls, text: str, **kwargs) -> "GridWorld":
        walls, start, goal = parse_map(text)
        return cls(walls, start, goal, **kwargs)

    @classmethod
    def from_file(cls, path, **kwargs) -> "GridWorld":
        path = Path(path)
        kwargs.setdefault("name", path.stem)
        return cls.from_text(path.read_text(), **kwargs)

    def is_free(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.walls.shape[0] and 0 <= c < self.walls.shape[1] and not self.walls[r, c]

    def encode(self, cell: Cell) -> np.ndarray:
        obs = np.zeros(self.obs_dim)
        obs[self._index[tuple(cell)]] = 1.0
        return obs

    def decode(self, obs: np.ndarray) -> Cell:
        return self.free_cells[int(np.argmax(obs))]

    def index_of(self, cell: Cell) -> int:
        return self._index[tuple(cell)]

    def subgoal(self, cell: Cell) -> GridSubgoal:
        cell = (int(cell[0]), int(cell[1]))
        if cell not in self._index:
            raise ValueError(f"subgoal {cell} is not a free cell")
        return GridSubgoal(cell, self._index[cell])

    def parse_subgoal(self, key: str) -> GridSubgoal:
        r, c = key.split("_")
        return self.subgoal((int(r), int(c)))

    def sample_subgoal(self, rng: np.random.Generator) -> GridSubgoal:
        return self.subgoal(self.free_cells[rng.integers(len(self.free_cells))])

    def reset(self, rng: np.random.Generator | None = None) -> np.ndarray:
        self.pos = self.start
        self.t = 0
        return self.encode(self.pos)

    def observe(self) -> np.ndarray:
        return self.encode(self.pos)

    def move(self, cell: Cell, action: int) -> Cell:
        dr, dc = MOVES[action]
        nxt = (cell[0] + dr, cell[1] + dc)
        return nxt if self.is_free(nxt) else cell

    def step(self, action: int) -> tuple[np.ndarray, float, bool, bool]:
        """Return ``(next_obs, reward, terminal, truncated)``."""
        if action not in MOVES:
            raise ValueError(f"invalid action {action}")
        self.pos = self.move(self.pos, action)
        self.t += 1
        terminal = self.pos == self.goal
        truncated = not terminal and self.cutoff is not None and self.t >= self.cutoff
        return self.encode(self.pos), -1.0, terminal, truncated

    def neighbours(self, cell: Cell) -> list[Cell]:
        out = []
        for a in MOVES:
            nxt = self.move(cell, a)
            if nxt != cell:
                out.append(nxt)
        return out

    def bfs(self, sources) -> dict[Cell, int]:
        """Shortest-path step counts from the nearest of ``sources`` to every reachable cell."""
        dist = {}
        queue = deque()
        for s in sources:
            dist[tuple(s)] = 0
            queue.append(tuple(s))
        while queue:
            cell = queue.popleft()
            for nxt in self.neighbours(cell):
                if nxt not in dist:
                    dist[nxt] = dist[cell] + 1
                    queue.append(nxt)
        return dist

    def doorways(self) -> list[Cell]:
        """Free cells walled on two opposite sides and open on the other two."""
        out = []
        for r, c in self.free_cells:
            vert = not self.is_free((r - 1, c)) and not self.is_free((r + 1, c))
            horiz = not self.is_free((r, c - 1)) and not self.is_free((r, c + 1))
            if vert and self.is_free((r, c - 1)) and self.is_free((r, c + 1)):
                out.append((r, c))
            elif horiz and self.is_free((r - 1, c)) and self.is_free((r + 1, c)):
                out.append((r, c))
        return out

    def render(self, marks: dict[Cell, str] | None = None) -> str:
        marks = marks or {}
        lines = []
        for r in range(self.walls.shape[0]):
            row = []
            for c in range(self.walls.shape[1]):
                if (r, c) in marks:
                    row.append(marks[(r, c)])
                elif self.walls[r, c]:
                    row.append("#")
                elif (r, c) == self.start:
                    row.append("S")
                elif (r, c) == self.goal:
                    row.append("G")
                else:
                    row.append(".")
            lines.append("".join(row))
        return "\n".join(lines)
