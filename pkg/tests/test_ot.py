import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from dmw.core import DimensionError, NumericalError, ParameterError
from dmw.ot import assignment_ot, exact_ot, round_to_marginals, sinkhorn, w1d_pth_power


def lp_cost(C, a, b):
    m, n = C.shape
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n:(i + 1) * n] = 1
    for j in range(n):
        A_eq[m + j, j::n] = 1
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    assert res.status == 0
    return res.fun


def simplex_weights(rng, m, zero_prob=0.0):
    w = rng.random(m) + 0.05
    if m > 1:
        w[rng.random(m) < zero_prob] = 0.0
        if w.sum() == 0:
            w[0] = 1.0
    return w / w.sum()


def assert_feasible(plan, a, b, tol=1e-9):
    assert np.all(plan.coupling >= -1e-15)
    assert np.abs(plan.coupling.sum(1) - a).max() <= tol
    assert np.abs(plan.coupling.sum(0) - b).max() <= tol


def test_w1d_examples():
    assert w1d_pth_power([0.3, 0.7, 0.1], [0.1, 0.3, 0.7], 1) == 0.0
    assert w1d_pth_power([0, 1], [1, 2], 1) == pytest.approx(1.0, abs=1e-15)
    assert w1d_pth_power([0, 1, 2], [0, 2], 1, b_weights=[0.5, 0.5]) == pytest.approx(1 / 3, abs=1e-15)
    C = np.abs(np.subtract.outer([0.0, 1, 2], [0.0, 2]))
    assert exact_ot(C, np.full(3, 1 / 3), [0.5, 0.5]).cost == pytest.approx(1 / 3, abs=1e-12)
    with pytest.raises(ParameterError):
        w1d_pth_power([], [1.0], 1)


def test_w1d_matches_lp(rng):
    for _ in range(200):
        K1, K2 = rng.integers(1, 13, 2)
        p = float(rng.choice([1, 2, 3]))
        x, y = rng.normal(size=K1), rng.normal(size=K2)
        a, b = simplex_weights(rng, K1), simplex_weights(rng, K2)
        C = np.abs(np.subtract.outer(x, y)) ** p
        got = w1d_pth_power(x, y, p, a, b)
        assert got == pytest.approx(lp_cost(C, a, b), abs=1e-9)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=9), st.lists(st.floats(-5, 5), min_size=1, max_size=9),
       st.lists(st.floats(-5, 5), min_size=1, max_size=9), st.sampled_from([1.0, 2.0]))
def test_w1d_triangle_inequality(x, y, z, p):
    wp = lambda u, v: w1d_pth_power(u, v, p) ** (1 / p)  # noqa: E731
    assert wp(x, z) <= wp(x, y) + wp(y, z) + 1e-9


def test_exact_trivial_cases():
    plan = exact_ot(np.array([[3.5]]), [1.0], [1.0])
    assert plan.coupling.tolist() == [[1.0]] and plan.cost == 3.5
    a, b = np.array([0.2, 0.8]), np.array([0.5, 0.25, 0.25])
    plan = exact_ot(np.zeros((2, 3)), a, b)
    assert plan.cost == 0.0
    assert_feasible(plan, a, b)
    with pytest.raises(ParameterError):
        exact_ot(np.zeros((2, 2)), [0.5, 0.5], [0.7, 0.4])


def test_exact_against_permutations(rng):
    for _ in range(30):
        C = rng.random((5, 5))
        best = min(C[range(5), list(s)].sum() for s in itertools.permutations(range(5))) / 5
        plan = exact_ot(C, np.full(5, 0.2), np.full(5, 0.2))
        assert plan.cost == pytest.approx(best, abs=1e-12)


def test_exact_against_lp_with_duality(rng):
    for _ in range(150):
        m, n = rng.integers(1, 16, 2)
        C = rng.random((m, n)) * rng.choice([1, 10, 0.01])
        if rng.random() < 0.3:
            C = np.round(C * 3)  # heavy ties stress degeneracy handling
        a, b = simplex_weights(rng, m, 0.2), simplex_weights(rng, n, 0.2)
        plan = exact_ot(C, a, b)
        assert_feasible(plan, a, b)
        assert plan.cost == pytest.approx(float(np.sum(plan.coupling * C)), abs=1e-12)
        assert plan.cost == pytest.approx(lp_cost(C, a, b), abs=1e-9)
        # dual feasibility and zero gap
        assert np.all(plan.u[:, None] + plan.v[None, :] <= C + 1e-9 * max(1, C.max()))
        assert plan.dual_objective <= plan.cost + 1e-9
        assert plan.dual_objective == pytest.approx(plan.cost, abs=1e-9)


def test_assignment_path():
    C = 1 - np.eye(4)
    plan = assignment_ot(C)
    assert plan.cost == 0 and np.array_equal(plan.coupling, np.eye(4) / 4)
    assert assignment_ot(np.array([[2.0]])).coupling.tolist() == [[1.0]]
    with pytest.raises((ParameterError, DimensionError)):
        assignment_ot(np.ones((2, 3)))


def test_assignment_matches_simplex(rng):
    for _ in range(100):
        K = int(rng.integers(1, 12))
        C = rng.random((K, K))
        u = np.full(K, 1 / K)
        plan = assignment_ot(C)
        assert set(np.unique(plan.coupling)) <= {0.0, 1 / K}
        assert plan.cost == pytest.approx(exact_ot(C, u, u).cost, abs=1e-9)


def test_sinkhorn_point_masses():
    plan, rep = sinkhorn(np.array([[0.0]]), [1.0], [1.0], 0.5)
    assert plan.cost == 0.0 and rep.converged


def test_sinkhorn_epsilon_sweep(rng):
    for _ in range(5):
        C = rng.random((8, 8))
        a, b = simplex_weights(rng, 8), simplex_weights(rng, 8)
        exact = exact_ot(C, a, b).cost
        prev = math.inf
        for eps in (0.1, 0.01, 0.001):
            plan, rep = sinkhorn(C, a, b, eps, max_iters=100000)
            assert rep.converged and rep.residual < rep.tol
            gap = plan.cost - exact
            assert gap >= -1e-6
            assert gap <= 2 * eps * math.log(8)
            assert plan.cost <= prev + 1e-6
            prev = plan.cost


def test_sinkhorn_zero_budget_and_errors():
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    plan, rep = sinkhorn(C, [0.5, 0.5], [0.5, 0.5], 0.5, max_iters=0)
    assert not rep.converged and rep.iterations == 0
    assert np.allclose(plan.coupling, np.exp(-C / 0.5))
    with pytest.raises(ParameterError):
        sinkhorn(C, [0.5, 0.5], [0.5, 0.5], 0.0)
    with pytest.raises(NumericalError, match="epsilon"):
        # every entry of C / epsilon overflows
        sinkhorn(np.full((2, 2), 1e300), [0.5, 0.5], [0.5, 0.5], 1e-10)


def test_sinkhorn_warm_start_reaches_same_plan(rng):
    C = rng.random((6, 7))
    a, b = simplex_weights(rng, 6), simplex_weights(rng, 7)
    cold, _ = sinkhorn(C, a, b, 0.05, tol=1e-12)
    warm, rep = sinkhorn(C, a, b, 0.05, tol=1e-12, init=(cold.u, cold.v))
    assert rep.iterations <= 2
    assert np.allclose(warm.coupling, cold.coupling, atol=1e-12)


def test_rounding_projects_onto_marginals(rng):
    for _ in range(50):
        a, b = simplex_weights(rng, 5), simplex_weights(rng, 4)
        P = np.outer(a, b) * (1 + 0.2 * rng.uniform(-1, 1, (5, 4)))
        R = round_to_marginals(P, a, b)
        assert_feasible(type("P", (), {"coupling": R})(), a, b, tol=1e-14)
