import itertools
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from codipas.game import GameError, GameSpec
from codipas.learners import softmax
from codipas.oracle import MAX_ACTIONS, is_epsilon_saddle, solve_logit, solve_saddle

from conftest import M


def test_security_game_saddle(security_game):
    sol = solve_saddle(security_game)
    np.testing.assert_allclose(sol.f_star, [0.4, 0.6], atol=1e-9)
    np.testing.assert_allclose(sol.g_star, [0.2, 0.8], atol=1e-9)
    assert sol.value == pytest.approx(2.6, abs=1e-9)


def test_matching_pennies():
    sol = solve_saddle(GameSpec([[1, -1], [-1, 1]]))
    np.testing.assert_allclose(sol.f_star, [0.5, 0.5])
    np.testing.assert_allclose(sol.g_star, [0.5, 0.5])
    assert sol.value == pytest.approx(0, abs=1e-12)


def _brute_force_pure_saddles(a):
    # every pure saddle, in lexicographic (row, col) order
    m, n = a.shape
    return [(i, j) for i, j in itertools.product(range(m), range(n))
            if a[i, j] == a[:, j].max() and a[i, j] == a[i, :].min()]


def test_dominated_game_lexicographic_tie_break():
    a = np.array([[2.0, 2.0], [1.0, 1.0]])
    sol = solve_saddle(GameSpec(a))
    i, j = _brute_force_pure_saddles(a)[0]
    np.testing.assert_array_equal(sol.f_star, np.eye(2)[i])
    np.testing.assert_array_equal(sol.g_star, np.eye(2)[j])
    assert sol.value == 2.0
    assert len(solve_saddle(GameSpec(a), enumerate_all=True)) >= 2


def test_one_by_one():
    sol = solve_saddle(GameSpec([[7.0]]))
    assert sol.f_star.tolist() == [1.0] and sol.g_star.tolist() == [1.0] and sol.value == 7.0


def test_size_cap():
    with pytest.raises(GameError):
        solve_saddle(GameSpec(np.zeros((MAX_ACTIONS + 1, 2))))


def test_solve_saddle_runtime(security_game):
    solve_saddle(security_game)
    best = min(_timed(lambda: solve_saddle(security_game)) for _ in range(20))
    assert best < 1e-3


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_two_by_two_interior_closed_form(vals):
    a = np.array(vals).reshape(2, 2)
    (p, q), (r, s) = a
    d = p - q - r + s
    if abs(d) < 1e-3:
        return
    x = (s - r) / d
    y = (s - q) / d
    if not (0.01 < x < 0.99 and 0.01 < y < 0.99):
        return
    sol = solve_saddle(GameSpec(a))
    np.testing.assert_allclose(sol.f_star, [x, 1 - x], atol=1e-12)
    np.testing.assert_allclose(sol.g_star, [y, 1 - y], atol=1e-12)


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_saddle_inequalities(m, n, seed):
    a = np.random.default_rng(seed).integers(-5, 6, size=(m, n)).astype(float)
    sol = solve_saddle(GameSpec(a))
    assert np.all(a @ sol.g_star <= sol.value + 1e-9)
    assert np.all(sol.f_star @ a >= sol.value - 1e-9)


def test_logit_high_temperature_near_uniform(security_game):
    le = solve_logit(security_game, 100.0)
    assert le.converged
    np.testing.assert_allclose(le.f_eps, [0.5, 0.5], atol=0.01)
    np.testing.assert_allclose(le.g_eps, [0.5, 0.5], atol=0.01)


@pytest.mark.parametrize("eps", [0.01, 0.3, 5.0])
def test_logit_matching_pennies(eps):
    le = solve_logit(GameSpec([[1, -1], [-1, 1]]), eps)
    np.testing.assert_allclose(le.f_eps, [0.5, 0.5], atol=1e-10)
    np.testing.assert_allclose(le.g_eps, [0.5, 0.5], atol=1e-10)


def test_logit_close_to_saddle(security_game):
    le = solve_logit(security_game, 0.05, tol=1e-10)
    assert le.converged and le.residual <= 1e-10
    dist = max(np.abs(le.f_eps - [0.4, 0.6]).max(), np.abs(le.g_eps - [0.2, 0.8]).max())
    assert dist < 0.05


def test_logit_fixed_point_and_interior(security_game):
    a = security_game.expected_matrix
    le = solve_logit(security_game, 0.05)
    np.testing.assert_allclose(le.f_eps, softmax(a @ le.g_eps, 0.05), atol=1e-9)
    np.testing.assert_allclose(le.g_eps, softmax(-(le.f_eps @ a), 0.05), atol=1e-9)
    assert np.all(le.f_eps > 0) and np.all(le.g_eps > 0)


def test_logit_distance_monotone_in_epsilon(security_game):
    dists = []
    for eps in (1, 0.3, 0.1, 0.05, 0.01):
        le = solve_logit(security_game, eps)
        assert le.converged
        dists.append(max(np.abs(le.f_eps - [0.4, 0.6]).max(), np.abs(le.g_eps - [0.2, 0.8]).max()))
    assert all(b <= a + 1e-12 for a, b in zip(dists, dists[1:]))


SHIPPED_GAMES = [M, [[2, 2], [1, 1]], [[1, -1], [-1, 1]], [[3, 0, 1], [0, 2, 1], [1, 1, 0]]]


@pytest.mark.parametrize("matrix", SHIPPED_GAMES)
@pytest.mark.parametrize("eps", [1.0, 0.05, 0.01])
def test_logit_residual_non_increasing(matrix, eps):
    le = solve_logit(GameSpec(matrix), eps, damping=0.5, history=True)
    h = le.history
    assert le.converged
    # no 50-iteration window ends above where it started
    for i in range(len(h)):
        j = min(i + 50, len(h) - 1)
        assert h[j] <= h[i]
    assert np.all(np.diff(h) <= 0)


def test_logit_not_converged_flag(security_game):
    le = solve_logit(security_game, 0.01, max_iters=2)
    assert not le.converged and le.iterations == 2


def test_logit_validation(security_game):
    for kwargs in ({"epsilon": 0}, {"epsilon": 0.1, "damping": 0}, {"epsilon": 0.1, "damping": 1.5},
                   {"epsilon": 0.1, "tol": 0}):
        with pytest.raises(GameError):
            solve_logit(security_game, **kwargs)


def test_is_epsilon_saddle(security_game):
    assert is_epsilon_saddle(security_game, [0.4, 0.6], [0.2, 0.8], 1e-9)
    assert is_epsilon_saddle(security_game, [0.4, 0.6], [0.2, 0.8], 0.0)
    assert not is_epsilon_saddle(security_game, [0.41, 0.59], [0.2, 0.8], 0.0)
    assert not is_epsilon_saddle(security_game, [0.5, 0.5], [0.5, 0.5], 0.5)
    with pytest.raises(GameError):
        is_epsilon_saddle(security_game, [0.5, 0.5], [0.5, 0.5], -1)
