"""Experiment orchestration: configs, the per-step training loop, baselines, sweeps, task pools."""

from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .analysis import RunLog, learning_curve, read_logs, retained_subgoals, stable_rank
from .auxdiscovery import AuxTask, GenerateAndTest, GntConfig, TesterState, generate_task
from .envs import hand_designed_subgoals, make_env
from .netcore import FeaturePartition, forward, init_params
from .rl_core import DQNLearner, LearnerConfig, Transition

log = logging.getLogger(__name__)

VARIANTS = ("no_aux", "hand_good", "hand_bad", "hand_mixed", "fixed_random",
            "generate_and_test", "fixed_pool")


@dataclass
class ExperimentConfig:
    env: str = "fourrooms"
    variant: str = "generate_and_test"
    map_file: str | None = None
    hand_tasks_file: str | None = None
    pool_file: str | None = None
    hidden_dim: int = 50
    episodes: int = 250
    max_total_steps: int | None = None
    cutoff: int | None = 500
    max_episode_steps: int | None = None
    log_interval: int = 1000
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    step_sizes: list[float] = field(default_factory=list)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    gnt: GntConfig = field(default_factory=GntConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "fixed_pool" and not self.pool_file:
            raise ValueError("variant fixed_pool needs pool_file")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        base = default_config(data.get("env", "fourrooms"))
        learner = replace(base.learner, **data.pop("learner", {}))
        gnt = replace(base.gnt, **data.pop("gnt", {}))
        fields_ = {k: v for k, v in asdict(base).items() if k not in ("learner", "gnt")}
        fields_.update(data)
        return cls(learner=learner, gnt=gnt, **fields_)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_variant(self, variant: str, **kwargs) -> "ExperimentConfig":
        return replace(self, variant=variant, **kwargs)

    def with_step_size(self, step_size: float) -> "ExperimentConfig":
        return replace(self, learner=replace(self.learner, step_size=step_size))


def default_config(env: str, variant: str = "generate_and_test", **overrides) -> ExperimentConfig:
    """Per-environment defaults (network/buffer/G&T settings as published; budgets and
    step sizes are this package's choices)."""
    if env == "fourrooms":
        cfg = ExperimentConfig(
            env=env, variant="no_aux", hidden_dim=50, episodes=250,
            step_sizes=[0.000625, 0.0025, 0.01, 0.04],
            learner=LearnerConfig(step_size=0.01, batch_size=16, target_sync=100, buffer_capacity=500),
            gnt=GntConfig(n_tasks=8, age_threshold=0, replacement_cycle=1000, replacement_ratio=0.25),
        )
    elif env == "maze":
        cfg = ExperimentConfig(
            env=env, variant="no_aux", hidden_dim=500, episodes=500,
            step_sizes=[0.00025, 0.001, 0.004],
            learner=LearnerConfig(step_size=0.001, batch_size=16, target_sync=100, buffer_capacity=1000),
            gnt=GntConfig(n_tasks=8, age_threshold=0, replacement_cycle=1000, replacement_ratio=0.25),
        )
    elif env == "pinball":
        cfg = ExperimentConfig(
            env=env, variant="no_aux", hidden_dim=128, episodes=150, cutoff=None,
            step_sizes=[0.0025, 0.005, 0.01],
            learner=LearnerConfig(step_size=0.005, batch_size=16, target_sync=200, buffer_capacity=10000),
            gnt=GntConfig(n_tasks=5, age_threshold=5000, replacement_cycle=5000, replacement_ratio=0.2),
        )
    else:
        raise ValueError(f"unknown environment {env!r}")
    return replace(cfg, variant=variant, **overrides)


def build_env(config: ExperimentConfig):
    return make_env(config.env, map_file=config.map_file, cutoff=config.cutoff,
                    max_episode_steps=config.max_episode_steps)


def load_pool(path) -> dict:
    data = json.loads(Path(path).read_text())
    if not data.get("subgoals"):
        raise ValueError(f"task pool {path} is empty")
    return data


def sample_from_pool(pool: dict, env, n: int, rng: np.random.Generator) -> list:
    """Draw ``n`` distinct subgoals, weighted by how many runs retained them."""
    keys = sorted(pool["subgoals"])
    if not keys:
        raise ValueError("task pool is empty")
    weights = np.array([pool["subgoals"][k] for k in keys], dtype=float)
    k = min(n, len(keys))
    picked = rng.choice(len(keys), size=k, replace=False, p=weights / weights.sum())
    return [env.parse_subgoal(keys[i]) for i in picked]


def build_tasks(config: ExperimentConfig, env, rng: np.random.Generator) -> list[AuxTask]:
    v = config.variant
    if v == "no_aux":
        subgoals = []
    elif v in ("hand_good", "hand_bad"):
        subgoals = hand_designed_subgoals(env, v.split("_")[1], config.hand_tasks_file)
    elif v == "hand_mixed":
        subgoals = (hand_designed_subgoals(env, "good", config.hand_tasks_file)
                    + hand_designed_subgoals(env, "bad", config.hand_tasks_file))
    elif v in ("fixed_random", "generate_and_test"):
        return [generate_task(env, rng, i + 1) for i in range(config.gnt.n_tasks)]
    elif v == "fixed_pool":
        subgoals = sample_from_pool(load_pool(config.pool_file), env, config.gnt.n_tasks, rng)
    else:
        raise ValueError(v)
    return [AuxTask(task_id=i + 1, subgoal=sg) for i, sg in enumerate(subgoals)]


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent per-run streams so variants share common random numbers."""
    names = ("env", "init", "action", "replay", "generator")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(s) for name, s in zip(names, children)}


def run_experiment(config: ExperimentConfig, seed: int) -> RunLog:
    """Train one agent for ``config.episodes`` episodes and return its log."""
    rngs = rng_streams(seed)
    env = build_env(config)
    tasks = build_tasks(config, env, rngs["generator"])
    n_aux = len(tasks)
    partition = FeaturePartition.equal_split(config.hidden_dim, n_aux)
    params = init_params(env.obs_dim, config.hidden_dim, env.n_actions, n_aux + 1, rngs["init"])
    learner = DQNLearner(params, partition, config.learner)
    gnt = GenerateAndTest(
        tasks, partition, TesterState.zeros(config.hidden_dim, config.gnt.tau),
        cfg=config.gnt if config.variant == "generate_and_test" else None,
        replace=config.variant == "generate_and_test",
    )
    run = RunLog(env=config.env, variant=config.variant, seed=seed,
                 step_size=config.learner.step_size,
                 initial_subgoals=[t.subgoal.key() for t in tasks])

    step = 0
    try:
        for episode in range(config.episodes):
            obs = env.reset(rngs["env"])
            ep_steps, ep_return = 0, 0.0
            while True:
                features, q = forward(learner.params, obs)
                action = learner.act(q[0], rngs["action"])
                next_obs, reward, terminal, truncated = env.step(action)
                learner.buffer.push(Transition(obs, action, reward, next_obs, terminal))
                step += 1
                if learner.ready():
                    learner.dqn_step(tasks, rngs["replay"])
                for ev in gnt.after_step(step, features, learner.params, learner.opt, env,
                                         rngs["generator"], rngs["init"]):
                    run.events.append({"step": ev.step, "replaced_subgoal": ev.replaced_subgoal.key(),
                                       "new_subgoal": ev.new_subgoal.key(), "task_id": ev.task_id,
                                       "utility": ev.utility, "age": ev.age})
                if n_aux and step % config.log_interval == 0:
                    _log_utilities(run, step, tasks, gnt.utilities())
                ep_steps += 1
                ep_return += reward
                obs = next_obs
                if terminal or truncated:
                    break
                if config.max_total_steps is not None and step >= config.max_total_steps:
                    break
            run.episodes.append((episode, ep_steps, ep_return))
            run.ranks.append((episode, stable_rank(learner.params.input_weights)))
            if config.max_total_steps is not None and step >= config.max_total_steps:
                break
    except FloatingPointError as exc:
        run.failed = True
        run.message = f"diverged at step {step}: {exc}"
        log.warning("run %s/%s seed %d %s", config.env, config.variant, seed, run.message)

    run.total_steps = step
    run.final_subgoals = [t.subgoal.key() for t in tasks]
    run.final_utilities = [float(u) for u in gnt.utilities()] if n_aux else []
    if n_aux and (not run.utilities or run.utilities[-1][0] != step):
        _log_utilities(run, step, tasks, gnt.utilities())
    return run


def _log_utilities(run: RunLog, step: int, tasks: list[AuxTask], utilities: np.ndarray) -> None:
    for task, u in zip(tasks, utilities):
        run.utilities.append((step, task.task_id, task.subgoal.key(), float(u), task.age))


def _run_job(args):
    config, seed = args
    return run_experiment(config, seed)


def run_many(config: ExperimentConfig, seeds=None, jobs: int = 1) -> list[RunLog]:
    seeds = list(config.seeds if seeds is None else seeds)
    work = [(config, s) for s in seeds]
    if jobs <= 1:
        return [_run_job(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_job, work))


def fixed_pool_run(pool_file, config: ExperimentConfig, seed: int) -> RunLog:
    """Train with tasks sampled from a pool of discovered subgoals, kept fixed."""
    return run_experiment(replace(config, variant="fixed_pool", pool_file=str(pool_file)), seed)


def build_pool(logs: list[RunLog]) -> dict:
    """Pool of retained subgoals from generate-and-test runs, with retention counts."""
    counts: Counter = Counter()
    envs = {lg.env for lg in logs}
    for lg in logs:
        if lg.variant != "generate_and_test" or lg.failed:
            continue
        counts.update(retained_subgoals(lg))
    if not counts:
        raise ValueError("no retained subgoals in the given logs")
    return {"env": envs.pop() if len(envs) == 1 else sorted(envs),
            "n_runs": sum(1 for lg in logs if lg.variant == "generate_and_test" and not lg.failed),
            "subgoals": dict(sorted(counts.items()))}


def write_pool(pool: dict, path) -> None:
    Path(path).write_text(json.dumps(pool, indent=2))


SWEPT_VARIANTS = ("no_aux", "hand_good", "hand_bad", "fixed_random")


def sweep(config: ExperimentConfig, variants=SWEPT_VARIANTS, pilot_seeds=None,
          jobs: int = 1) -> dict[str, dict]:
    """Pick each variant's step size by lowest mean AUC over the pilot seeds.

    Generate-and-test (and the pool replay) reuse the winner of ``hand_good``.
    """
    if not config.step_sizes:
        raise ValueError("config.step_sizes is empty")
    pilot_seeds = list(range(10)) if pilot_seeds is None else list(pilot_seeds)
    results: dict[str, dict] = {}
    for variant in variants:
        aucs = {}
        for alpha in config.step_sizes:
            cfg = config.with_variant(variant).with_step_size(alpha)
            logs = run_many(cfg, pilot_seeds, jobs)
            aucs[alpha] = float(np.mean(learning_curve(logs).auc))
            log.info("sweep %s %s alpha=%g mean AUC %.1f", config.env, variant, alpha, aucs[alpha])
        best = min(aucs, key=lambda a: (aucs[a], a))
        results[variant] = {"best_step_size": best, "mean_auc": aucs}
    if "hand_good" in results:
        for variant in ("generate_and_test", "fixed_pool"):
            results[variant] = {"best_step_size": results["hand_good"]["best_step_size"],
                                "mean_auc": {}, "inherited_from": "hand_good"}
    return results


def save_runs(logs: list[RunLog], out_dir) -> None:
    out = Path(out_dir)
    for lg in logs:
        lg.write(out / f"{lg.env}_{lg.variant}" / f"seed{lg.seed}")


def load_runs(directory) -> list[RunLog]:
    return read_logs(directory)
