import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gnt_aux.analysis import (
    RunLog,
    learning_curve,
    rank_curve,
    read_logs,
    replay_events,
    retained_subgoals,
    stable_rank,
    stderr,
    subgoal_histogram,
    write_curve_csv,
)


def gram_stable_rank(a):
    """Oracle through the eigenvalues of A^T A instead of an SVD."""
    ev = np.linalg.eigvalsh(a.T @ a)
    return ev.sum() / ev.max()


# ---- stable rank -----------------------------------------------------------

@pytest.mark.parametrize("n", [1, 3, 17])
def test_identity_stable_rank(n):
    assert stable_rank(np.eye(n)) == pytest.approx(n, abs=1e-9)


def test_diag_stable_rank():
    assert stable_rank(np.diag([2.0, 1.0])) == pytest.approx(1.25, abs=1e-9)


def test_rank_one_matrix():
    assert stable_rank(np.outer([1.0, 2.0, 3.0], [4.0, 5.0])) == pytest.approx(1.0, abs=1e-12)


def test_zero_matrix_rejected():
    with pytest.raises(ZeroDivisionError):
        stable_rank(np.zeros((3, 3)))


small = arrays(float, st.tuples(st.integers(1, 8), st.integers(1, 8)),
               elements=st.floats(-10, 10, allow_subnormal=False))


@settings(max_examples=60, deadline=None)
@given(small)
def test_stable_rank_matches_gram_oracle(a):
    if np.linalg.norm(a) < 1e-3:
        return
    r = stable_rank(a)
    assert r == pytest.approx(gram_stable_rank(a), rel=1e-6)
    assert 1.0 - 1e-9 <= r <= min(a.shape) + 1e-9


@settings(max_examples=40, deadline=None)
@given(small, st.floats(1e-3, 1e3))
def test_stable_rank_scale_invariant(a, c):
    if np.linalg.norm(a) < 1e-3:
        return
    assert stable_rank(c * a) == pytest.approx(stable_rank(a), rel=1e-9)


# ---- curves ----------------------------------------------------------------

def _log(steps, seed=0, variant="no_aux", ranks=None):
    log = RunLog(env="fourrooms", variant=variant, seed=seed, step_size=0.01)
    log.episodes = [(i, s, -float(s)) for i, s in enumerate(steps)]
    log.ranks = [(i, r) for i, r in enumerate(ranks or [1.0] * len(steps))]
    return log


def test_auc_is_total_steps():
    assert _log([10, 20, 30]).auc == 60.0


def test_stderr():
    assert stderr([1.0, 3.0]) == pytest.approx(1.0)
    assert stderr([5.0]) == 0.0


def test_learning_curve_mean_and_stderr():
    curve = learning_curve([_log([10, 20, 30]), _log([30, 40, 50, 60])])
    assert curve.n_runs == 2
    assert np.allclose(curve.mean, [20, 30, 40])
    assert np.allclose(curve.stderr, [10, 10, 10])
    assert np.allclose(curve.auc, [60, 120])


def test_learning_curve_needs_runs():
    with pytest.raises(ValueError):
        learning_curve([])


def test_rank_curve():
    curve = rank_curve([_log([1, 1], ranks=[1.0, 2.0]), _log([1, 1], ranks=[3.0, 4.0])])
    assert np.allclose(curve.mean, [2.0, 3.0])


def test_curve_csv(tmp_path):
    path = tmp_path / "curve.csv"
    write_curve_csv(learning_curve([_log([3, 4])]), path)
    assert path.read_text().splitlines() == ["x,mean,stderr", "0,3.0,0.0", "1,4.0,0.0"]


# ---- events and histograms -------------------------------------------------

def _event(step, task_id, old, new):
    return {"step": step, "replaced_subgoal": old, "new_subgoal": new, "task_id": task_id,
            "utility": 0.0, "age": step}


def test_replay_events():
    events = [_event(1000, 2, "b", "c"), _event(2000, 2, "c", "d"), _event(2000, 1, "a", "e")]
    assert replay_events(["a", "b"], events) == ["e", "d"]


def test_replay_detects_inconsistent_log():
    with pytest.raises(ValueError):
        replay_events(["a", "b"], [_event(1000, 1, "x", "y")])


def test_histogram_counts_retained():
    l1 = _log([1]); l1.initial_subgoals = ["1_1", "2_2"]; l1.events = [_event(5, 1, "1_1", "3_3")]
    l2 = _log([1]); l2.initial_subgoals = ["3_3", "2_2"]
    assert retained_subgoals(l1) == ["3_3", "2_2"]
    assert subgoal_histogram([l1, l2]) == {"3_3": 2, "2_2": 2}


def test_histogram_binning():
    log = _log([1]); log.initial_subgoals = ["0.1200_0.5100", "0.1800_0.5900", "0.9000_0.9000"]
    assert subgoal_histogram([log], bin_size=0.1) == {"1_5": 2, "9_9": 1}


def test_runlog_round_trip(tmp_path):
    log = _log([12, 7], seed=3, variant="generate_and_test", ranks=[1.5, 2.5])
    log.utilities = [(1000, 1, "1_1", 0.25, 1000)]
    log.events = [_event(1000, 1, "1_1", "2_2")]
    log.initial_subgoals = ["1_1"]
    log.final_subgoals = ["2_2"]
    log.final_utilities = [0.0]
    log.total_steps = 19
    log.write(tmp_path / "run3")
    back = RunLog.read(tmp_path / "run3")
    assert back == log
    assert read_logs(tmp_path) == [log]
    header = (tmp_path / "run3" / "events.csv").read_text().splitlines()[0]
    assert header.startswith("step,replaced_subgoal,new_subgoal")
