import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rlgts.reward import (
    NoThreshold, RewardContext, RewardParams, correctness, efficiency, is_solved, relative_errors, reward,
    solve_threshold,
)

P = RewardParams()


def ctx(targets, gt=None):
    return RewardContext(np.atleast_2d(np.array(targets, dtype=np.float64)), gt)


def test_correctness_hand_case():
    # (5 / (1*2)) * (|2-1|/2 + 0)
    assert correctness(np.array([[1.0, 4.0]]), ctx([2.0, 4.0]), P) == pytest.approx(1.25, rel=1e-12)


def test_correctness_zero_on_exact_match():
    c = ctx([[2.0, -3.0], [7.5, 1e-4]])
    assert correctness(c.targets.copy(), c, P) == 0.0


def test_nan_and_inf_terms_are_capped():
    c = ctx([2.0, 4.0])
    expected = P.lambda_correctness / 2 * P.error_cap
    assert correctness(np.array([[math.nan, 4.0]]), c, P) == pytest.approx(expected, rel=1e-12)
    assert correctness(np.array([[math.inf, 4.0]]), c, P) == pytest.approx(expected, rel=1e-12)
    # a finite but huge error also saturates at the cap
    assert correctness(np.array([[1e300, 4.0]]), c, P) == pytest.approx(expected, rel=1e-12)


def test_norm_floor_guards_zero_targets():
    c = ctx([0.0])
    d = relative_errors(np.array([[1e-3]]), c, P)
    assert d[0, 0] == pytest.approx(1.0, rel=1e-12)


def test_zero_tol_snaps_tiny_errors():
    c = ctx([3.0])
    assert relative_errors(np.array([[3.0 * (1 + 1e-12)]]), c, P)[0, 0] == 0.0
    assert relative_errors(np.array([[3.0 * (1 + 1e-6)]]), c, P)[0, 0] > 0.0


@pytest.mark.parametrize("t,expected", [(0, 1), (2, 3), (14, 15)])
def test_efficiency(t, expected):
    assert efficiency(t) == expected


def test_efficiency_rejects_negative():
    with pytest.raises(ValueError):
        efficiency(-1)


def test_reward_hand_cases():
    c = ctx([2.0, 4.0])
    assert reward(c.targets.copy(), 2, c, P) == pytest.approx(100 / 3, rel=1e-12)
    assert reward(np.array([[1.0, 4.0]]), 0, c, P) == pytest.approx(100 / 2.25, rel=1e-12)
    worst = reward(np.array([[math.nan, math.nan]]), 100, c, P)
    assert 0 < worst < 1e-4


@pytest.mark.parametrize("gt,expected", [(3, 100 / 3), (1, 100.0), (10, 10.0)])
def test_solve_threshold(gt, expected):
    assert solve_threshold(ctx([1.0], gt), P) == pytest.approx(expected, rel=1e-12)


def test_threshold_requires_length():
    with pytest.raises(NoThreshold):
        solve_threshold(ctx([1.0]), P)


def test_is_solved_examples():
    c = ctx([[2.0, 4.0]], gt=3)
    exact = c.targets.copy()
    assert is_solved(reward(exact, 2, c, P), c, P, exact)
    assert is_solved(reward(exact, 1, c, P), c, P, exact)
    # correctness 0.5 at the ground-truth length falls short
    assert not is_solved(100 / (0.5 + 3), c, P)


def test_exact_solve_rejects_short_near_miss():
    c = ctx([[2.0, 4.0]], gt=3)
    near = np.array([[2.0, 4.4]])  # correctness 0.25, one line
    r = reward(near, 0, c, P)
    assert r >= solve_threshold(c, P)
    assert not is_solved(r, c, P, near)
    assert is_solved(r, c, RewardParams(exact_solve=False), near)


def test_params_validation():
    with pytest.raises(ValueError):
        RewardParams(lambda_scale=0)
    with pytest.raises(ValueError):
        RewardParams(zero_tol=-1)
    with pytest.raises(ValueError):
        correctness(np.zeros((2, 2)), ctx([1.0, 2.0]), P)


values = st.floats(allow_nan=True, allow_infinity=True, width=64)


@given(st.lists(values, min_size=6, max_size=6), st.lists(st.floats(-1e6, 1e6), min_size=6, max_size=6),
       st.integers(0, 50))
def test_reward_bounded_finite_and_monotone(state, target, t):
    c = ctx(np.reshape(target, (2, 3)))
    s = np.reshape(state, (2, 3))
    r = reward(s, t, c, P)
    assert math.isfinite(r)
    assert 0 < r <= P.lambda_scale
    assert reward(s, t + 1, c, P) < r


@given(st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=4), st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=4))
def test_correctness_matches_loop_oracle(state, target):
    total = 0.0
    for s, o in zip(state, target):
        d = abs(o - s) / max(abs(o), P.norm_floor)
        if not math.isfinite(d) or d > P.error_cap:
            d = P.error_cap
        total += 0.0 if d < P.zero_tol else d
    expected = P.lambda_correctness / 4 * total
    got = correctness(np.array([state]), ctx(target), P)
    assert got == pytest.approx(expected, rel=1e-12, abs=1e-300)
