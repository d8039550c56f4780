"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criteria 4-8 train four-rooms agents on seeds 100-109, which are disjoint from
the pilot seeds 0-9 used to pick the step size (0.01 won for every variant).
All runs are shared through a module-scoped cache; the whole file takes a few
minutes on one core.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import record
from gnt_aux.analysis import learning_curve, stable_rank, stderr
from gnt_aux.auxdiscovery import (
    GntConfig,
    TesterState as TState,
    generate_task,
    instantaneous_utility,
    replacement_step,
    task_utility,
    tick_ages,
    update_traces,
)
from gnt_aux.envs import make_env
from gnt_aux.envs.pinball import Pinball, PinballConfig
from gnt_aux.harness import build_pool, default_config, run_many, write_pool
from gnt_aux.netcore import FeaturePartition, OptimizerState, backward_masked, forward, init_params
from toy_mdp import train, value_iteration

SEEDS = list(range(100, 110))
STEP_SIZE = 0.01
N_HALLWAY = 3


# ---- shared four-rooms runs ------------------------------------------------

@pytest.fixture(scope="module")
def fourrooms(tmp_path_factory):
    cache = {}

    def get(variant, step_size=STEP_SIZE):
        key = (variant, step_size)
        if key not in cache:
            cfg = default_config("fourrooms", variant if variant != "fixed_pool" else "no_aux")
            cfg = cfg.with_step_size(step_size)
            if variant == "fixed_pool":
                pool_file = tmp_path_factory.mktemp("pool") / "pool.json"
                write_pool(build_pool(get("generate_and_test")), pool_file)
                cfg = cfg.with_variant("fixed_pool", pool_file=str(pool_file))
            logs = run_many(cfg, SEEDS)
            assert not any(lg.failed for lg in logs), [lg.message for lg in logs if lg.failed]
            cache[key] = logs
        return cache[key]

    return get


def auc_stats(logs):
    auc = learning_curve(logs).auc
    return float(np.mean(auc)), stderr(auc)


def gap_ok(lower, higher):
    """Mean of ``lower`` is smaller by more than the standard error of the difference."""
    (m_lo, s_lo), (m_hi, s_hi) = lower, higher
    return m_hi - m_lo > np.hypot(s_lo, s_hi)


def fmt(name, stats):
    return f"{name} {stats[0]:.0f}+-{stats[1]:.0f}"


# ---- 1. gradient masking ---------------------------------------------------

def _fd(params, name, idx, loss, eps=1e-6):
    arr = getattr(params, name)
    orig = arr[idx]
    arr[idx] = orig + eps
    up = loss()
    arr[idx] = orig - eps
    down = loss()
    arr[idx] = orig
    return (up - down) / (2 * eps)


def test_criterion_1_gradient_masking():
    worst_rel, leaks = 0.0, 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        obs_dim, hidden, n_act, n_aux = rng.integers(2, 6), rng.integers(4, 12), rng.integers(2, 5), rng.integers(1, 4)
        params = init_params(obs_dim, hidden, n_act, n_aux + 1, rng)
        params.input_bias[:] = rng.normal(scale=0.3, size=hidden)
        part = FeaturePartition.equal_split(hidden, n_aux)
        obs = rng.normal(size=(3, obs_dim))
        coeffs = rng.normal(size=(3, n_act))
        features, _ = forward(params, obs)
        for head in range(n_aux + 1):
            dq = np.zeros((3, n_aux + 1, n_act))
            dq[:, head, :] = coeffs
            grads = backward_masked(params, obs, features, dq, part)
            others = part.owner != head
            leaks += np.count_nonzero(grads.input_weights[:, others])
            leaks += np.count_nonzero(grads.input_bias[others])

            def loss():
                return float((forward(params, obs)[1][:, head, :] * coeffs).sum())

            for k in part.features_of(head):
                for i in range(obs_dim):
                    num = _fd(params, "input_weights", (i, k), loss)
                    ana = grads.input_weights[i, k]
                    worst_rel = max(worst_rel, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
    ok = leaks == 0 and worst_rel < 1e-4
    record(1, "gradient masking", ok, f"non-owner gradient entries={leaks}, worst FD rel err={worst_rel:.2e}")
    assert ok


# ---- 2. utility oracle ----------------------------------------------------

def test_criterion_2_utility_oracle():
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        hidden, n_act = 20, 4
        params = init_params(6, hidden, n_act, 3, rng)
        part = FeaturePartition.equal_split(hidden, 2)
        tau = float(rng.uniform(0.01, 1.0))
        tester = TState.zeros(hidden, tau)
        trace = [0.0] * hidden
        for _ in range(30):
            f, _ = forward(params, rng.normal(size=6))
            u = instantaneous_utility(f, params.output_weights[0])
            brute = [sum(abs(params.output_weights[0][k, a] * f[k]) for a in range(n_act)) for k in range(hidden)]
            worst = max(worst, float(np.max(np.abs(u - brute))))
            update_traces(tester, u)
            trace = [(1 - tau) * t + tau * b for t, b in zip(trace, brute)]
            worst = max(worst, float(np.max(np.abs(tester.traces - trace))))
        for i in (1, 2):
            owned = sum(trace[k] for k in range(hidden) if part.owner[k] == i)
            worst = max(worst, abs(task_utility(tester, part, i) - owned))
    ok = worst <= 1e-12
    record(2, "utility oracle", ok, f"max abs deviation={worst:.1e}")
    assert ok


# ---- 3. DQN sanity --------------------------------------------------------

def test_criterion_3_dqn_two_state_mdp():
    q_star = value_iteration()
    q, _ = train(n_steps=5000, seed=0)
    policy_ok = np.array_equal(q.argmax(axis=1), q_star.argmax(axis=1))
    err = float(np.max(np.abs(q.max(axis=1) - q_star.max(axis=1))))
    ok = policy_ok and err < 1e-2
    record(3, "DQN sanity", ok, f"greedy policy match={policy_ok}, max |V-V*|={err:.1e} after 5000 steps")
    assert ok


# ---- 4. tester discrimination ---------------------------------------------

def hallway_wins(logs):
    """Seeds where hallway tasks out-score corner tasks: (final-fifth average, last-step trace)."""
    late_wins, last_wins = 0, 0
    for log in logs:
        u = np.array([row[3] for row in log.utilities]).reshape(-1, 7)
        late = u[-max(1, len(u) // 5):].mean(axis=0)
        late_wins += late[:N_HALLWAY].mean() > late[N_HALLWAY:].mean()
        final = np.array(log.final_utilities)
        last_wins += final[:N_HALLWAY].mean() > final[N_HALLWAY:].mean()
    return int(late_wins), int(last_wins)


@pytest.mark.slow
def test_criterion_4_tester_discrimination(fourrooms):
    wins, raw_wins = hallway_wins(fourrooms("hand_mixed"))
    # reported only: the same check at a smaller step size, where the main head's
    # weights on unhelpful features drift less under RMSProp
    small_late, small_last = hallway_wins(fourrooms("hand_mixed", 0.0025))
    ok = wins >= 8
    record(4, "tester discrimination", ok,
           f"hallway > corner in {wins}/10 seeds (final-fifth average, last-step trace {raw_wins}/10) "
           f"at step size {STEP_SIZE}; not gated: {small_late}/10 ({small_last}/10) at 0.0025")
    assert ok


# ---- 5. hand-designed ordering --------------------------------------------

@pytest.mark.slow
def test_criterion_5_hand_designed_ordering(fourrooms):
    good, base, bad = (auc_stats(fourrooms(v)) for v in ("hand_good", "no_aux", "hand_bad"))
    ok = gap_ok(good, base) and gap_ok(base, bad)
    record(5, "hand-designed ordering", ok,
           f"{fmt('hand_good', good)} < {fmt('no_aux', base)} < {fmt('hand_bad', bad)} (AUC, gaps vs SE of difference)")
    assert ok


# ---- 6. discovery beats baselines -----------------------------------------

@pytest.mark.slow
def test_criterion_6_discovery_beats_baselines(fourrooms):
    gnt, rand, base = (auc_stats(fourrooms(v)) for v in ("generate_and_test", "fixed_random", "no_aux"))
    ok = gap_ok(gnt, rand) and gap_ok(rand, base)
    cycle = default_config("fourrooms").gnt.replacement_cycle
    ages = [ev["age"] for lg in fourrooms("generate_and_test") for ev in lg.events]
    newest = np.mean(np.array(ages) == cycle) if ages else float("nan")
    record(6, "discovery beats baselines", ok,
           f"{fmt('G&T', gnt)} < {fmt('fixed_random', rand)} < {fmt('no_aux', base)} required; "
           f"{newest:.0%} of replacements hit tasks created one cycle earlier")
    assert ok


# ---- 7. pool replay -------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_pool_replay(fourrooms):
    pool, base = auc_stats(fourrooms("fixed_pool")), auc_stats(fourrooms("no_aux"))
    ok = pool[0] < base[0]
    record(7, "pool replay", ok, f"{fmt('fixed_pool', pool)} < {fmt('no_aux', base)} required")
    assert ok


# ---- 8. stable rank -------------------------------------------------------

@pytest.mark.slow
def test_criterion_8_stable_rank(fourrooms):
    unit_ok = (abs(stable_rank(np.eye(7)) - 7) <= 1e-9
               and abs(stable_rank(np.diag([2.0, 1.0])) - 1.25) <= 1e-9)
    gnt = float(np.mean([lg.ranks[-1][1] for lg in fourrooms("generate_and_test")]))
    base = float(np.mean([lg.ranks[-1][1] for lg in fourrooms("no_aux")]))
    ok = unit_ok and gnt > base
    record(8, "stable rank", ok, f"G&T {gnt:.3f} > no_aux {base:.3f}; unit values exact={unit_ok}")
    assert ok


# ---- 9. replacement arithmetic --------------------------------------------

def _simulate(cfg, n_steps, seed=0):
    env = make_env("fourrooms")
    rng = np.random.default_rng(seed)
    tasks = [generate_task(env, rng, i + 1) for i in range(cfg.n_tasks)]
    part = FeaturePartition.equal_split(50, cfg.n_tasks)
    params = init_params(env.obs_dim, 50, 4, cfg.n_tasks + 1, rng)
    opt = OptimizerState.zeros_like(params)
    tester = TState.zeros(50, cfg.tau)
    events = []
    for step in range(1, n_steps + 1):
        tick_ages(tasks)
        update_traces(tester, rng.random(50))
        events += replacement_step(tasks, tester, part, params, opt, cfg, step, env, rng)
    return events


def test_criterion_9_replacement_arithmetic():
    cfg = GntConfig(n_tasks=8, age_threshold=0, replacement_cycle=1000, replacement_ratio=0.25)
    events = _simulate(cfg, 20_000)
    per_step = {}
    for ev in events:
        per_step[ev.step] = per_step.get(ev.step, 0) + 1
    arithmetic_ok = per_step == {s: 2 for s in range(1000, 20_001, 1000)}

    gated = _simulate(replace_age(cfg, 5000), 40_000)
    gate_ok = bool(gated) and min(ev.age for ev in gated) >= 5001
    ok = arithmetic_ok and gate_ok
    record(9, "replacement arithmetic", ok,
           f"2 per cycle at every multiple of 1000: {arithmetic_ok}; "
           f"mu=5000 youngest replaced age={min(ev.age for ev in gated) if gated else None}")
    assert ok


def replace_age(cfg, mu):
    return GntConfig(n_tasks=cfg.n_tasks, age_threshold=mu, replacement_cycle=cfg.replacement_cycle,
                     replacement_ratio=cfg.replacement_ratio, tau=cfg.tau)


# ---- 10. pinball physics --------------------------------------------------

PENETRATIONS = []


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.lists(st.integers(0, 4), min_size=30, max_size=120))
def _no_penetration(seed, actions):
    env = make_env("pinball")
    rng = np.random.default_rng(seed)
    sg = env.sample_subgoal(rng)
    env.set_state(sg.x, sg.y, *rng.uniform(-1, 1, size=2))
    for a in actions:
        _, _, term, _ = env.step(a)
        if not env.is_free(env.pos):
            PENETRATIONS.append((seed, tuple(env.pos)))
        if term:
            break


def test_criterion_10_pinball_physics():
    cfg = PinballConfig(start=(0.5, 0.5), goal=(0.05, 0.05), goal_radius=0.01, polygons=[],
                        drag=0.995, substeps=20, substep_dt=0.0001)
    env = Pinball(cfg)
    env.reset()
    env.set_state(0.5, 0.5, 0.3, -0.2)
    drag_err = 0.0
    for k in range(1, 60):
        env.step(4)
        drag_err = max(drag_err, float(np.max(np.abs(env.vel - np.array([0.3, -0.2]) * 0.995 ** k))))

    PENETRATIONS.clear()
    _no_penetration()

    rest = make_env("pinball")
    obs0 = rest.reset()
    fixed = all(np.array_equal(rest.step(4)[0], obs0) for _ in range(100))
    ok = drag_err <= 1e-9 and not PENETRATIONS and fixed
    record(10, "pinball physics", ok,
           f"drag closed-form err={drag_err:.1e}, penetrations={len(PENETRATIONS)}, rest+nop fixed point={fixed}")
    assert ok
