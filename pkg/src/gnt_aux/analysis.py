"""Run logs, stable rank, learning-curve aggregation and discovered-subgoal summaries."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


@dataclass
class RunLog:
    env: str
    variant: str
    seed: int
    step_size: float = float("nan")
    episodes: list[tuple[int, int, float]] = field(default_factory=list)          # (episode, steps, return)
    utilities: list[tuple[int, int, str, float, int]] = field(default_factory=list)  # (step, task_id, subgoal, utility, age)
    events: list[dict] = field(default_factory=list)
    ranks: list[tuple[int, float]] = field(default_factory=list)                  # (episode, stable_rank)
    initial_subgoals: list[str] = field(default_factory=list)
    final_subgoals: list[str] = field(default_factory=list)
    final_utilities: list[float] = field(default_factory=list)
    total_steps: int = 0
    failed: bool = False
    message: str = ""

    @property
    def steps_per_episode(self) -> np.ndarray:
        return np.array([e[1] for e in self.episodes], dtype=float)

    @property
    def auc(self) -> float:
        return float(self.steps_per_episode.sum())

    def write(self, directory) -> Path:
        """Write episodes/utilities/events/rank CSVs plus ``meta.json`` into ``directory``."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "episodes.csv", ["episode", "steps", "return"], self.episodes)
        _write_csv(out / "utilities.csv", ["step", "task_id", "subgoal", "utility", "age"], self.utilities)
        _write_csv(out / "events.csv", EVENT_FIELDS,
                   [[ev[k] for k in EVENT_FIELDS] for ev in self.events])
        _write_csv(out / "rank.csv", ["episode", "stable_rank"], self.ranks)
        meta = {
            "env": self.env, "variant": self.variant, "seed": self.seed, "step_size": self.step_size,
            "initial_subgoals": self.initial_subgoals, "final_subgoals": self.final_subgoals,
            "final_utilities": self.final_utilities, "total_steps": self.total_steps,
            "failed": self.failed, "message": self.message,
        }
        (out / "meta.json").write_text(json.dumps(meta, indent=2))
        return out

    @classmethod
    def read(cls, directory) -> "RunLog":
        d = Path(directory)
        meta = json.loads((d / "meta.json").read_text())
        log = cls(env=meta["env"], variant=meta["variant"], seed=meta["seed"],
                  step_size=meta.get("step_size", float("nan")))
        for key in ("initial_subgoals", "final_subgoals", "final_utilities", "total_steps",
                    "failed", "message"):
            setattr(log, key, meta.get(key, getattr(log, key)))
        log.episodes = [(int(r["episode"]), int(r["steps"]), float(r["return"]))
                        for r in _read_csv(d / "episodes.csv")]
        log.utilities = [(int(r["step"]), int(r["task_id"]), r["subgoal"], float(r["utility"]), int(r["age"]))
                         for r in _read_csv(d / "utilities.csv")]
        log.events = [{"step": int(r["step"]), "replaced_subgoal": r["replaced_subgoal"],
                       "new_subgoal": r["new_subgoal"], "task_id": int(r["task_id"]),
                       "utility": float(r["utility"]), "age": int(r["age"])}
                      for r in _read_csv(d / "events.csv")]
        log.ranks = [(int(r["episode"]), float(r["stable_rank"])) for r in _read_csv(d / "rank.csv")]
        return log


EVENT_FIELDS = ["step", "replaced_subgoal", "new_subgoal", "task_id", "utility", "age"]


def _write_csv(path: Path, header: list[str], rows: Iterable) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _read_csv(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_logs(directory) -> list[RunLog]:
    """Every run directory (one holding ``meta.json``) below ``directory``."""
    return [RunLog.read(p.parent) for p in sorted(Path(directory).rglob("meta.json"))]


def stable_rank(matrix: np.ndarray) -> float:
    """``sum_i s_i^2 / max_i s_i^2`` over the singular values of ``matrix``."""
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2:
        raise ValueError("stable_rank expects a 2-D matrix")
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        raise ZeroDivisionError("stable rank is undefined for a zero matrix")
    s2 = s ** 2
    return float(s2.sum() / s2[0])


@dataclass
class Curve:
    mean: np.ndarray
    stderr: np.ndarray
    auc: np.ndarray      # per run: total steps over the common episodes
    n_runs: int

    def rows(self):
        return [(i, float(m), float(s)) for i, (m, s) in enumerate(zip(self.mean, self.stderr))]


def stderr(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / np.sqrt(values.size))


def learning_curve(logs: list[RunLog]) -> Curve:
    """Per-episode mean and standard error of steps across runs.

    Runs with different episode counts are truncated to the shortest one.
    """
    if not logs:
        raise ValueError("need at least one run log")
    series = [log.steps_per_episode for log in logs]
    n_ep = min(len(s) for s in series)
    data = np.stack([s[:n_ep] for s in series])
    n = data.shape[0]
    err = data.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(n_ep)
    return Curve(data.mean(axis=0), err, data.sum(axis=1), n)


def replay_events(initial: list[str], events: list[dict]) -> list[str]:
    """Apply replacement events (in step order) to an initial subgoal list.

    ``initial[i]`` is the subgoal of task ``i + 1``.
    """
    current = list(initial)
    for ev in sorted(events, key=lambda e: (e["step"], e["task_id"])):
        idx = ev["task_id"] - 1
        if current[idx] != ev["replaced_subgoal"]:
            raise ValueError(f"event at step {ev['step']} replaces {ev['replaced_subgoal']} "
                             f"but task {ev['task_id']} holds {current[idx]}")
        current[idx] = ev["new_subgoal"]
    return current


def retained_subgoals(log: RunLog) -> list[str]:
    """Subgoals still held at the end of a run, reconstructed from its event log."""
    return replay_events(log.initial_subgoals, log.events)


def subgoal_histogram(logs: list[RunLog], bin_size: float | None = None) -> Counter:
    """Count how often each subgoal was retained at the end of a run.

    Grid subgoals are counted per cell key. For continuous subgoals pass
    ``bin_size`` to count per 2-D bin (keys ``"ix_iy"``).
    """
    counts: Counter = Counter()
    for log in logs:
        for key in retained_subgoals(log):
            if bin_size is not None:
                x, y = (float(v) for v in key.split("_"))
                # round first so 0.9 / 0.1 lands in bin 9 rather than 8
                ix, iy = (int(np.floor(round(v / bin_size, 9))) for v in (x, y))
                key = f"{ix}_{iy}"
            counts[key] += 1
    return counts


def write_curve_csv(curve: Curve, path) -> None:
    _write_csv(Path(path), ["x", "mean", "stderr"], curve.rows())


def rank_curve(logs: list[RunLog]) -> Curve:
    """Per-episode stable rank across runs (same aggregation as :func:`learning_curve`)."""
    if not logs:
        raise ValueError("need at least one run log")
    series = [np.array([r[1] for r in log.ranks]) for log in logs]
    n_ep = min(len(s) for s in series)
    data = np.stack([s[:n_ep] for s in series])
    n = data.shape[0]
    err = data.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(n_ep)
    return Curve(data.mean(axis=0), err, data.sum(axis=1), n)
