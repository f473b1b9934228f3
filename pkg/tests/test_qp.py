import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from gmrfsel.qp import solve_qp


def random_problem(seed, d, m):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(d, d))
    H = M @ M.T + 0.1 * np.eye(d)
    c = rng.normal(size=d) * 3
    G = rng.normal(size=(m, d))
    h = rng.uniform(0.1, 1.0, size=m)  # x = 0 is strictly feasible
    return H, c, G, h


@given(seed=st.integers(0, 2 ** 32 - 1), d=st.integers(1, 6), m=st.integers(1, 15))
def test_matches_slsqp(seed, d, m):
    H, c, G, h = random_problem(seed, d, m)
    res = solve_qp(H, c, G, h, np.zeros(d))
    assert res.converged
    assert np.all(G @ res.x <= h + 1e-9)
    f = lambda x: 0.5 * x @ H @ x + c @ x
    ref = minimize(f, np.zeros(d), jac=lambda x: H @ x + c, method="SLSQP",
                   constraints=[{"type": "ineq", "fun": lambda x: h - G @ x, "jac": lambda x: -G}],
                   options={"ftol": 1e-14, "maxiter": 500})
    assert f(res.x) <= f(ref.x) + 1e-7 * (1 + abs(f(ref.x)))
    assert res.kkt_residual < 1e-7


@given(seed=st.integers(0, 2 ** 32 - 1))
def test_beats_random_feasible_points(seed):
    H, c, G, h = random_problem(seed, 4, 8)
    res = solve_qp(H, c, G, h, np.zeros(4))
    f = lambda x: 0.5 * x @ H @ x + c @ x
    rng = np.random.default_rng(seed + 1)
    for _ in range(200):
        x = rng.normal(size=4) * rng.uniform(0, 2)
        if np.all(G @ x <= h):
            assert f(res.x) <= f(x) + 1e-10


def test_unconstrained_minimum_when_inactive():
    H = np.diag([2.0, 4.0])
    c = np.array([-2.0, -4.0])
    res = solve_qp(H, c, np.array([[1.0, 0.0]]), np.array([10.0]), np.zeros(2))
    assert np.allclose(res.x, [1.0, 1.0])
    assert res.active == []


def test_box_solution():
    H = np.eye(2)
    c = np.array([-5.0, 0.5])
    G = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    h = np.ones(4)
    res = solve_qp(H, c, G, h, np.zeros(2))
    assert np.allclose(res.x, [1.0, -0.5])


def test_infeasible_start_rejected():
    with pytest.raises(ValueError):
        solve_qp(np.eye(1), np.zeros(1), np.array([[1.0]]), np.array([-1.0]), np.zeros(1))
