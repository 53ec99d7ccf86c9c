from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmvmc.errors import (
    DepthOverflow,
    InconsistentRewardDomain,
    InfiniteDepthWithoutTruncation,
    InfiniteHorizonUndiscounted,
    InvalidDelta,
    InvalidTransitionMatrix,
)
from qmvmc.mrp import (
    INF,
    MrpInstance,
    RewardSpec,
    Setting,
    StateSpace,
    discount_sum,
    effective_depth,
    enumerate_value,
    exact_value,
    from_json,
    lp_norm,
    path_independent_instance,
    path_probabilities,
    sample_path,
    sample_paths,
    to_json,
    truncated_target,
    truncation_depth,
)


def random_stochastic(rng, n):
    P = rng.random((n, n)) ** 3
    P[rng.random((n, n)) < 0.3] = 0.0
    P[np.arange(n), rng.integers(0, n, n)] += 0.1
    return P / P.sum(axis=1, keepdims=True)


def random_rewards(rng, rows, d, q, R_max):
    R = rng.standard_normal((rows, d))
    norms = lp_norm(R, q)
    return R / np.maximum(norms, 1e-12)[:, None] * R_max * rng.random((rows, 1))


def random_instance(rng, setting, n=3, d=2, T=3, gamma=0.8, q=2.0, R_max=1.5):
    P = random_stochastic(rng, n)
    if setting is Setting.PATH_INDEPENDENT:
        payload = random_rewards(rng, n, d, q, R_max)
    elif setting is Setting.EXACT_DEPTH:
        payload = random_rewards(rng, n ** (T + 1), d, q, R_max)
    else:
        payload = [random_rewards(rng, n ** (t + 1), d, q, R_max) for t in range(T + 1)]
    spec = RewardSpec(setting, d, R_max, q, payload, gamma)
    return MrpInstance(StateSpace(tuple(range(n))), P, spec, int(rng.integers(0, n)), T)


# -- depth helpers ---------------------------------------------------------------


@pytest.mark.parametrize("T, gamma, expected", [(10, 0.8, 5.0), (INF, 0.9, 10.0), (3, 1.0, 3.0)])
def test_effective_depth_examples(T, gamma, expected):
    assert effective_depth(T, gamma) == pytest.approx(expected)


@pytest.mark.parametrize("T, gamma, expected", [(INF, 0.5, 2.0), (3, 1.0, 4.0), (1, 0.25, 1.25)])
def test_discount_sum_examples(T, gamma, expected):
    assert discount_sum(T, gamma) == pytest.approx(expected)


@pytest.mark.parametrize("T, gamma, delta, expected", [(INF, 0.9, 0.1, 53), (5, 0.9, 0.1, 5), (INF, 0.5, 1.0, 3)])
def test_truncation_depth_examples(T, gamma, delta, expected):
    # ceil(10 ln 200) = 53 and ceil(2 ln 4) = 3
    assert truncation_depth(T, gamma, delta) == expected


def test_truncation_depth_rejects_bad_delta():
    for delta in (0.0, -1.0, 2.0, 3.0):
        with pytest.raises(InvalidDelta):
            truncation_depth(10, 0.9, delta)


def test_infinite_undiscounted_rejected():
    with pytest.raises(InfiniteHorizonUndiscounted):
        discount_sum(INF, 1.0)
    with pytest.raises(InfiniteHorizonUndiscounted):
        effective_depth(INF, 1.0)


@given(T=st.integers(1, 60), gamma=st.floats(0.0, 1.0))
def test_discount_sum_dominates_half_effective_depth(T, gamma):
    direct = sum(gamma**t for t in range(T + 1))
    assert discount_sum(T, gamma) == pytest.approx(direct, rel=1e-9, abs=1e-12)
    assert direct >= effective_depth(T, gamma) / 2 - 1e-12


# -- value functions ---------------------------------------------------------------


def test_single_loop_infinite_geometric():
    inst = path_independent_instance([[1.0]], [[1.0, 0.0]], T=INF, gamma=0.5, R_max=1.0, q=2.0)
    np.testing.assert_allclose(exact_value(inst, truncate_at=200), [2.0, 0.0], atol=1e-10)
    np.testing.assert_allclose(exact_value(inst), [2.0, 0.0], atol=1e-10)


def test_zero_rewards_give_zero_value(rng):
    inst = path_independent_instance(random_stochastic(rng, 4), np.zeros((4, 3)), T=5, gamma=0.7, R_max=1.0, q=1.0)
    np.testing.assert_array_equal(exact_value(inst), np.zeros(3))


def test_two_state_chain():
    # a -> b -> b, rewards (0) at a and (1) at b, gamma=1, T=3: three rewarded steps
    inst = path_independent_instance([[0, 1], [0, 1]], [[0.0], [1.0]], T=3, gamma=1.0, R_max=1.0, q=1.0, states=("a", "b"))
    np.testing.assert_allclose(exact_value(inst), [3.0])
    np.testing.assert_allclose(enumerate_value(inst), [3.0])


@pytest.mark.parametrize("setting", list(Setting))
@pytest.mark.parametrize("seed", range(5))
def test_dp_matches_enumeration(setting, seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, setting, n=3, d=2, T=4, gamma=0.85)
    np.testing.assert_allclose(exact_value(inst), enumerate_value(inst), atol=1e-10)


def test_path_probabilities_sum_to_one(rng):
    inst = random_instance(rng, Setting.PATH_INDEPENDENT, n=4, T=3)
    for t in range(4):
        probs = path_probabilities(inst, t)
        assert probs.shape == (4 ** (t + 1),)
        assert probs.sum() == pytest.approx(1.0)


@given(gamma=st.floats(0.05, 0.95), delta=st.floats(0.01, 1.5), seed=st.integers(0, 10**6))
def test_truncation_error_within_half_delta(gamma, delta, seed):
    rng = np.random.default_rng(seed)
    q = 2.0
    n, d, R_max = 3, 2, 1.3
    inst = path_independent_instance(
        random_stochastic(rng, n), random_rewards(rng, n, d, q, R_max), T=INF, gamma=gamma, R_max=R_max, q=q
    )
    T_delta = truncation_depth(INF, gamma, delta)
    gap = exact_value(inst) - truncated_target(inst, T_delta)
    assert lp_norm(gap, q) <= delta * R_max / 2 + 1e-12


def test_truncated_cumulative_example():
    # gamma=0.9, delta=0.1 -> T_delta=53 and the tail is below 0.05 R_max
    inst = path_independent_instance([[1.0]], [[1.0]], T=INF, gamma=0.9, R_max=1.0, q=2.0)
    assert truncation_depth(INF, 0.9, 0.1) == 53
    gap = exact_value(inst) - truncated_target(inst, 53)
    assert lp_norm(gap, 2.0) <= 0.05


@pytest.mark.parametrize("setting", [Setting.CUMULATIVE, Setting.PATH_INDEPENDENT])
def test_value_norm_bounded(setting):
    for seed in range(5):
        rng = np.random.default_rng(seed)
        inst = random_instance(rng, setting, T=3, gamma=0.9, q=1.0)
        bound = discount_sum(inst.T, inst.gamma) * inst.rewards.R_max
        assert lp_norm(exact_value(inst), 1.0) <= bound + 1e-12


# -- validation ----------------------------------------------------------------------


def test_bad_transitions_rejected():
    with pytest.raises(InvalidTransitionMatrix):
        path_independent_instance([[0.5, 0.4], [0, 1]], [[0.0], [0.0]], T=1, gamma=1.0, R_max=1.0, q=1.0)
    with pytest.raises(InvalidTransitionMatrix):
        path_independent_instance([[1.5, -0.5], [0, 1]], [[0.0], [0.0]], T=1, gamma=1.0, R_max=1.0, q=1.0)


def test_row_drift_renormalized_once():
    inst = path_independent_instance([[0.5, 0.5 + 1e-10], [0, 1]], [[0.0], [0.0]], T=1, gamma=1.0, R_max=1.0, q=1.0)
    np.testing.assert_allclose(inst.transitions.sum(axis=1), 1.0, atol=1e-15)


def test_reward_norm_checked():
    with pytest.raises(InconsistentRewardDomain):
        path_independent_instance([[1.0]], [[1.0, 1.0]], T=1, gamma=1.0, R_max=1.0, q=2.0)


def test_exact_depth_needs_finite_depth():
    spec = RewardSpec(Setting.EXACT_DEPTH, 1, 1.0, 1.0, np.zeros((1, 1)), 0.5)
    with pytest.raises(InfiniteDepthWithoutTruncation):
        MrpInstance(StateSpace(("s",)), np.ones((1, 1)), spec, 0, INF)


def test_exact_depth_path_cap():
    spec = RewardSpec(Setting.EXACT_DEPTH, 1, 1.0, 1.0, np.zeros((1, 1)), 1.0)
    with pytest.raises(DepthOverflow):
        MrpInstance(StateSpace(tuple(range(10))), np.eye(10), spec, 0, 6)


# -- sampling and serialization ----------------------------------------------------------


def test_deterministic_sample_path():
    inst = path_independent_instance([[0, 1], [0, 1]], [[0.0], [1.0]], T=1, gamma=1.0, R_max=1.0, q=1.0, states=("a", "b"))
    for seed in range(5):
        assert sample_path(inst, 1, seed) == ("a", "b")


def test_self_loop_sample_path():
    inst = path_independent_instance([[1.0]], [[0.0]], T=4, gamma=1.0, R_max=1.0, q=1.0, states=("s0",))
    assert sample_path(inst, 4, 3) == ("s0",) * 5


def test_fair_coin_frequency():
    inst = path_independent_instance([[0.5, 0.5], [0.5, 0.5]], [[0.0], [0.0]], T=1, gamma=1.0, R_max=1.0, q=1.0)
    paths = sample_paths(inst, 1, 10**5, np.random.default_rng(0))
    assert abs(paths[:, 1].mean() - 0.5) <= 0.01


@pytest.mark.parametrize("setting", list(Setting))
def test_json_round_trip(setting, rng):
    inst = random_instance(rng, setting, T=2)
    back = from_json(to_json(inst))
    np.testing.assert_allclose(exact_value(back), exact_value(inst), atol=1e-14)
    assert back.T == inst.T and back.rewards.setting is setting


def test_json_infinite_depth():
    inst = path_independent_instance([[1.0]], [[0.5]], T=INF, gamma=0.5, R_max=1.0, q=INF)
    back = from_json(to_json(inst))
    assert back.T == INF and math.isinf(back.rewards.q)
