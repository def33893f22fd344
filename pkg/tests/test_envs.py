import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gedlab.divergence import DomainError
from gedlab.envs import (
    EnvironmentConstructionError,
    RegretLedger,
    augmented_action,
    env_from_config,
    make_active_learning,
    make_constrained_bandit,
    make_gaussian_bandit,
    make_hypothesis_test,
    make_risk_aware,
    optimal_feasible_policy,
    optimal_value_lp,
    step,
)
from gedlab.policy import SimplexGrid, feasible_interval_vertices

GRID3 = SimplexGrid(3, 50)


def _hand_bandit():
    R = [[0.1, 0.6, 0.9], [0.1, 0.3, 0.2]]
    C = [[0.0, 0.4, 0.9], [0.0, 0.2, 0.1]]
    return make_constrained_bandit(R, C, 0.5)


def test_constrained_bandit_hand_lp():
    env = _hand_bandit()
    # context 0: mixing actions 1 and 2 on the boundary 0.4 + 0.5 g = 0.5 gives g = 0.2
    pi, v = optimal_feasible_policy(env, 0, GRID3)
    np.testing.assert_allclose(pi, [0.0, 0.8, 0.2], atol=1e-12)
    assert v == pytest.approx(0.66)
    assert optimal_value_lp(env.utility[0], env.constraint[0], env.tau) == pytest.approx(0.66)
    # context 1: the constraint is slack, so the best arm is played outright
    pi, v = optimal_feasible_policy(env, 1, GRID3)
    np.testing.assert_array_equal(pi, [0, 1, 0])
    assert v == pytest.approx(0.3)


def test_zero_cost_makes_everything_feasible():
    env = make_constrained_bandit([[0.2, 0.7, 0.4]], [[0.0, 0.0, 0.0]], 0.1)
    pi, v = optimal_feasible_policy(env, 0, GRID3)
    np.testing.assert_array_equal(pi, [0, 1, 0])


def test_threshold_at_safe_cost():
    env = make_constrained_bandit([[0.2, 0.7]], [[0.3, 0.6]], 0.3)
    pi, v = optimal_feasible_policy(env, 0, SimplexGrid(2, 50))
    np.testing.assert_array_equal(pi, [1, 0])
    assert v == pytest.approx(0.2)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_grid_optimum_within_gap_of_lp(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(2, 4))
    R = rng.uniform(size=(1, K))
    C = rng.uniform(size=(1, K))
    C[0, 0] = 0.05
    tau = float(rng.uniform(0.05, 0.9))
    env = make_constrained_bandit(R, C, tau)
    grid = SimplexGrid(K, 50)
    pi, v = optimal_feasible_policy(env, 0, grid)
    lp = optimal_value_lp(R[0], C[0], tau)
    assert pi @ C[0] <= tau + 1e-12
    assert v <= lp + 1e-9
    assert v >= lp - grid.gap_bound(1.0) - 1e-9
    if K == 2:
        assert v == pytest.approx(lp, abs=1e-9)


def test_safe_action_premise_is_checked():
    with pytest.raises(EnvironmentConstructionError):
        make_constrained_bandit([[0.2, 0.7]], [[0.6, 0.1]], 0.5)
    with pytest.raises(EnvironmentConstructionError):
        make_constrained_bandit([[0.2, 0.7], [0.2, 0.7]], [[0.1, 0.1], [0.2, 0.1]], 0.5)
    with pytest.raises(DomainError):
        make_constrained_bandit([[1.2, 0.7]], [[0.1, 0.1]], 0.5)


def test_noise_models():
    rng = np.random.default_rng(0)
    env = make_constrained_bandit([[0.2, 0.7]], [[0.1, 0.4]], 0.5, noise="none")
    assert env.sample_outcomes(0, 1, rng) == (0.7, 0.4)
    env = make_constrained_bandit([[0.2, 0.7]], [[0.1, 0.4]], 0.5)
    ys = np.array([env.sample_outcomes(0, 1, rng) for _ in range(10000)])
    np.testing.assert_allclose(ys.mean(axis=0), [0.7, 0.4], atol=0.02)


def test_risk_aware_hand_mixture():
    # arm 0: Dirac at 0.2; arm 1: Ber(0.5) with variance 0.25
    probs = np.array([[[0.0, 1.0, 0.0], [0.5, 0.0, 0.5]]])
    env = make_risk_aware(probs, [0.0, 0.2, 1.0], 0.1)
    np.testing.assert_allclose(env.constraint[0], [0.0, 0.25])
    # the policy-average of variances is linear: 0.25 g <= 0.1 gives g = 0.4
    pi, v = optimal_feasible_policy(env, 0, SimplexGrid(2, 50))
    np.testing.assert_allclose(pi, [0.6, 0.4])
    assert v == pytest.approx(0.6 * 0.2 + 0.4 * 0.5)
    rng = np.random.default_rng(1)
    y, z = env.sample_outcomes(0, 1, rng)
    assert y == z


def test_risk_aware_zero_variance_is_feasible():
    probs = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    env = make_risk_aware(probs, [0.1, 0.9], 0.0)
    pi, _ = optimal_feasible_policy(env, 0, SimplexGrid(2, 50))
    np.testing.assert_array_equal(pi, [0, 1])


def test_hypothesis_test_reduction():
    env = make_hypothesis_test([1.0, 0.0, 0.8], 0.2)
    np.testing.assert_array_equal(env.utility[0], [1.0, 0.0])
    np.testing.assert_array_equal(env.constraint[0], [0.0, 1.0])
    assert np.all(env.utility[1] == 0) and np.all(env.constraint[1] == 0)
    # mass partition: for every deterministic action T1 + T2 = P(y=0|x)
    for a in range(2):
        np.testing.assert_allclose((env.utility + env.constraint)[:, a], [1.0, 0.0, 0.8])
    # pi(0) = q gives (1 - q) P <= alpha, so q >= 1 - alpha / P
    V = feasible_interval_vertices(env.constraint[2][None], env.tau)
    assert 1 - V[1, 1] == pytest.approx(1 - 0.2 / 0.8)


@settings(max_examples=100)
@given(st.floats(0, 1), st.floats(0.01, 1))
def test_hypothesis_test_mass_identity(p, alpha):
    env = make_hypothesis_test([p], alpha)
    for a in range(2):
        assert env.utility[0, a] + env.constraint[0, a] == pytest.approx(p)


def test_active_learning_reduction():
    label = np.array([[0.3, 0.7]])
    loss = np.array([[0.0, 1.0], [1.0, 0.0]])
    env = make_active_learning(label, np.array([[0.3, 0.6]]), 0.2, loss)
    assert env.K == 4 and env.safe_action == augmented_action(0, 0) == 0
    # the query bit leaves the utility unchanged and the no-query branch costs exactly 0
    np.testing.assert_allclose(env.utility[0], [0.3, 0.3, 0.7, 0.7])
    np.testing.assert_array_equal(env.constraint[0], [0.0, 0.3, 0.0, 0.6])
    pi, v = optimal_feasible_policy(env, 0, SimplexGrid(4, 10))
    best = max(p @ env.utility[0] for p in SimplexGrid(4, 10).points if p @ env.constraint[0] <= 0.2)
    assert v == pytest.approx(best) == pytest.approx(0.7)


def test_active_learning_free_queries_match_exhaustive_grid():
    label = np.array([[0.5, 0.5]])
    loss = np.array([[0.0, 0.8], [0.6, 0.0]])
    costs = np.array([[0.0, 0.0]])
    env = make_active_learning(label, costs, 0.0, loss)
    grid = SimplexGrid(4, 8)
    ref = max(float(p @ env.utility[0]) for p in grid.points)
    _, v = optimal_feasible_policy(env, 0, grid)
    assert v == pytest.approx(ref)


def test_gaussian_bandit_tables():
    feats = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    env = make_gaussian_bandit(feats, [0.5, 0.8], [0.1, 0.6], 0.3, 0.4)
    np.testing.assert_allclose(env.utility[0], [0.5, 0.8])
    np.testing.assert_allclose(env.constraint[0], [0.1, 0.6])


def test_env_from_config_dispatch():
    env = env_from_config({"type": "hypothesis_test", "prior_null": [0.5], "alpha": 0.1})
    assert env.name == "hypothesis_test"
    with pytest.raises(DomainError):
        env_from_config({"type": "nope"})


# ---------------------------------------------------------------------------
# ledger and step
# ---------------------------------------------------------------------------


def test_ledger_accounting():
    led = RegretLedger(0.5)
    led.record(1, 0.6, 0.6, 0.5)
    led.record(2, 0.6, 0.4, 0.5 + 1e-13)
    led.record(3, 0.6, 0.5, 0.6)
    assert led.cumulative == pytest.approx([0.0, 0.2, 0.3])
    assert led.violation_rounds == [3] and led.violations_after(2) == 1 and led.violations_after(3) == 0


def test_step_regret_for_optimal_and_safe_policies():
    env = _hand_bandit()
    led = RegretLedger(env.tau)
    pi_opt, v = optimal_feasible_policy(env, 1, GRID3)
    r = step(env, 1, pi_opt, np.random.default_rng(0), np.random.default_rng(1), led, 1, v)
    assert r.regret_inc == pytest.approx(0.0) and not r.violated
    r = step(env, 1, np.eye(3)[0], np.random.default_rng(0), np.random.default_rng(1), led, 2, v)
    assert r.regret_inc == pytest.approx(v - env.r0)


def test_step_replays_identically():
    env = _hand_bandit()
    runs = []
    for _ in range(2):
        led = RegretLedger(env.tau)
        rp, re = np.random.default_rng(5), np.random.default_rng(6)
        runs.append([step(env, 0, [0.2, 0.5, 0.3], rp, re, led, t, 0.66) for t in range(1, 20)])
    assert runs[0] == runs[1]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_feasible_play_has_nonnegative_regret(seed):
    rng = np.random.default_rng(seed)
    R, C = rng.uniform(size=(1, 3)), rng.uniform(size=(1, 3))
    C[0, 0] = 0.0
    env = make_constrained_bandit(R, C, 0.4)
    _, v = optimal_feasible_policy(env, 0, GRID3)
    led = RegretLedger(env.tau)
    for p in itertools.islice((p for p in GRID3.points if p @ C[0] <= 0.4), 0, None, 37):
        inc, violated = led.record(1, v, float(p @ R[0]), float(p @ C[0]))
        assert inc >= -1e-12 and not violated
