import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dmw.core import DimensionError, ParameterError, make_rng, n_pairs, pairwise_avg_cost
from dmw.estimators import (
    DIRECTION_BATCH,
    EmpiricalMatrixLaw,
    ScaleWeights,
    direction_matrix,
    empirical_dmw,
    enumerate_matrix_law,
    exact_dmw,
    hierarchy_check,
    multiscale_dmw,
    project_atoms,
    sample_matrix_law,
    sliced_costs_laws,
    sliced_dmw,
    softmin_weights,
)
from dmw.ot import w1d_pth_power
from dmw.spaces import FiniteMetricMeasureSpace, space_counterexample_x, space_counterexample_y
from scipy.optimize import linprog

from conftest import planar_space

# exact order-3 DMW (p=1) of the counterexample pair, produced by the
# enumeration + simplex pipeline and cross-checked against HiGHS below
COUNTEREXAMPLE_DMW3 = 0.0625
COUNTEREXAMPLE_DMW4 = 0.09375

TWO_POINT = FiniteMetricMeasureSpace.uniform([[0.0, 1.0], [1.0, 0.0]])


def law_dict(law):
    return {tuple(a): w for a, w in zip(law.atoms.tolist(), law.weights.tolist())}


def lp_w(law_x, law_y, p):
    C = pairwise_avg_cost(law_x.atoms, law_y.atoms, p)
    m, n = C.shape
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1
    for j in range(n):
        A[m + j, j::n] = 1
    res = linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([law_x.weights, law_y.weights]), method="highs")
    return res.fun ** (1 / p)


def test_one_point_space_gives_zero_atoms():
    S = FiniteMetricMeasureSpace.uniform([[0.0]])
    law = sample_matrix_law(S, 4, 20, 0)
    assert law.atoms.shape == (20, 6) and not law.atoms.any()


def test_two_point_sampling_frequency():
    K = 10_000
    law = sample_matrix_law(TWO_POINT, 2, K, 11)
    freq = law.atoms[:, 0].mean()
    assert abs(freq - 0.5) <= 3 * math.sqrt(0.25 / K)


def test_sampling_is_deterministic():
    S = planar_space(np.random.default_rng(0), 6)
    a = sample_matrix_law(S, 3, 50, 4)
    b = sample_matrix_law(S, 3, 50, 4)
    assert np.array_equal(a.atoms, b.atoms)


def test_enumeration_examples():
    assert law_dict(enumerate_matrix_law(TWO_POINT, 2)) == {(0.0,): 0.5, (1.0,): 0.5}
    X, Y = space_counterexample_x(), space_counterexample_y()
    for S in (X, Y):
        assert law_dict(enumerate_matrix_law(S, 2)) == pytest.approx({(0.0,): 0.25, (1.0,): 0.5, (2.0,): 0.25})
    with pytest.raises(ParameterError, match="m\\^n"):
        enumerate_matrix_law(planar_space(np.random.default_rng(0), 11), 6)


def test_enumerated_weights_sum_to_one(rng):
    S = planar_space(rng, 5, weights=rng.dirichlet(np.ones(5)))
    for n in (2, 3, 4):
        law = enumerate_matrix_law(S, n)
        assert law.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert len({tuple(a) for a in law.atoms.tolist()}) == law.size


@pytest.mark.parametrize("n,k", [(3, 2), (4, 2), (4, 3)])
def test_projection_consistency(rng, n, k):
    S = planar_space(rng, 4, weights=rng.dirichlet(np.ones(4)))
    lo = law_dict(enumerate_matrix_law(S, k))
    hi = law_dict(enumerate_matrix_law(S, n).project(k))
    assert set(lo) == set(hi)
    for key in lo:
        assert hi[key] == pytest.approx(lo[key], abs=1e-14)


def test_counterexample_regression_constant():
    X, Y = space_counterexample_x(), space_counterexample_y()
    assert exact_dmw(X, Y, 2) <= 1e-9
    v3 = exact_dmw(X, Y, 3)
    assert v3 == pytest.approx(COUNTEREXAMPLE_DMW3, abs=1e-12)
    assert v3 == pytest.approx(lp_w(enumerate_matrix_law(X, 3), enumerate_matrix_law(Y, 3), 1), abs=1e-9)
    assert exact_dmw(X, Y, 4) == pytest.approx(COUNTEREXAMPLE_DMW4, abs=1e-12)


def test_empirical_dmw_basics(rng):
    S = planar_space(rng, 5)
    law = sample_matrix_law(S, 3, 40, 1)
    assert empirical_dmw(law, law).value <= 1e-9
    other = sample_matrix_law(S, 4, 40, 1)
    with pytest.raises(DimensionError):
        empirical_dmw(law, other)
    with pytest.raises(ParameterError):
        empirical_dmw(law, law, solver="greedy")


def test_empirical_dmw_matches_lp(rng):
    for _ in range(10):
        X, Y = planar_space(rng, 6), planar_space(rng, 6)
        p = float(rng.choice([1, 2]))
        lx, ly = sample_matrix_law(X, 3, 30, rng), sample_matrix_law(Y, 3, 30, rng)
        assert empirical_dmw(lx, ly, p).value == pytest.approx(lp_w(lx.merged(), ly.merged(), p), abs=1e-9)


def test_empirical_sinkhorn_upper_bounds_exact(rng):
    X, Y = planar_space(rng, 5), planar_space(rng, 5)
    lx, ly = enumerate_matrix_law(X, 2), enumerate_matrix_law(Y, 2)
    exact = empirical_dmw(lx, ly).value
    ent = empirical_dmw(lx, ly, solver="sinkhorn", epsilon=5e-2, max_iters=50000)
    assert ent.mode == "empirical-sinkhorn"
    assert ent.details["report"].converged
    assert exact - 1e-6 <= ent.value <= exact + 2 * 5e-2 * math.log(lx.size * ly.size)


def test_empirical_error_decomposition(rng):
    for trial in range(20):
        X, Y = planar_space(rng, 4), planar_space(rng, 4)
        n = 3
        ex, ey = enumerate_matrix_law(X, n), enumerate_matrix_law(Y, n)
        sx, sy = sample_matrix_law(X, n, 200, rng), sample_matrix_law(Y, n, 200, rng)
        lhs = abs(empirical_dmw(sx, sy).value - empirical_dmw(ex, ey).value)
        rhs = empirical_dmw(sx, ex).value + empirical_dmw(sy, ey).value
        assert lhs <= rhs + 1e-9


def test_sliced_self_distance_with_shared_stream(rng):
    S = planar_space(rng, 7)
    est = sliced_dmw(S, S, 3, 100, 20, tuple_seeds=(5, 5), seed=2)
    assert est.value == 0.0


def test_sliced_single_pinned_direction(rng):
    X, Y = planar_space(rng, 6), planar_space(rng, 6)
    theta = direction_matrix(3, 1, 1.0, "euclidean", 9)
    est = sliced_dmw(X, Y, 3, 64, 1, tuple_seeds=(1, 2), directions=theta)
    ax = sample_matrix_law(X, 3, 64, make_rng(1, 1, 3)).atoms
    ay = sample_matrix_law(Y, 3, 64, make_rng(2, 1, 3)).atoms
    ref = w1d_pth_power(ax @ theta[0], ay @ theta[0], 1)
    assert est.value == pytest.approx(ref, rel=1e-12)


def test_project_atoms_matches_matmul(rng):
    A, T = rng.random((30, 10)), rng.normal(size=(7, 10))
    assert np.allclose(project_atoms(A, T), A @ T.T, atol=1e-13)


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_sliced_lower_bound_per_direction(rng, p):
    for _ in range(4):
        X, Y = planar_space(rng, 4), planar_space(rng, 4)
        for n in (2, 3):
            lx, ly = enumerate_matrix_law(X, n), enumerate_matrix_law(Y, n)
            full = empirical_dmw(lx, ly, p).value
            theta = direction_matrix(n, 100, p, "dual", int(rng.integers(2**32)))
            per_dir = sliced_costs_laws(lx, ly, theta, p) ** (1 / p)
            assert np.all(per_dir <= full + 1e-9)


def test_streaming_matches_in_memory(rng):
    X, Y = planar_space(rng, 9), planar_space(rng, 9)
    for L in (1, DIRECTION_BATCH, DIRECTION_BATCH + 7, 3 * DIRECTION_BATCH):
        a = sliced_dmw(X, Y, 4, 700, L, seed=3)
        b = sliced_dmw(X, Y, 4, 700, L, seed=3, streaming=True)
        assert a.value == b.value
        assert np.array_equal(a.per_direction, b.per_direction)
        assert b.details["streaming"]


def test_sliced_determinism_and_validation(rng):
    X, Y = planar_space(rng, 5), planar_space(rng, 5)
    assert sliced_dmw(X, Y, 3, 50, 10, seed=1).value == sliced_dmw(X, Y, 3, 50, 10, seed=1).value
    with pytest.raises(ParameterError):
        sliced_dmw(X, Y, 1, 50, 10)
    with pytest.raises(ParameterError):
        sliced_dmw(X, Y, 3, 0, 10)
    with pytest.raises(DimensionError):
        sliced_dmw(X, Y, 3, 10, 2, directions=np.ones((2, 5)))
    est = sliced_dmw(X, Y, 3, 50, 10)
    assert set(est.timings) == {"directions_s", "sampling_s", "slicing_s"}
    assert all(t >= 0 for t in est.timings.values())


def test_sliced_self_distance_shrinks_with_K():
    S = planar_space(np.random.default_rng(3), 30)
    vals = [sliced_dmw(S, S, 3, K, 32, seed=8).value for K in (100, 1000, 10000)]
    assert vals[0] > vals[1] > vals[2]


def test_multiscale_linearity(rng):
    X, Y = planar_space(rng, 5), planar_space(rng, 5)
    w = ScaleWeights((2, 3, 4), np.array([0.2, 0.5, 0.3]))
    est = multiscale_dmw(X, Y, w, K=80, L=16, seed=4)
    combo = sum(a * est.per_scale[n] for n, a in w.items())
    assert est.value == pytest.approx(combo, abs=1e-12)
    single = multiscale_dmw(X, Y, ScaleWeights((3,), np.array([1.0])), K=80, L=16, seed=4)
    assert single.value == sliced_dmw(X, Y, 3, 80, 16, seed=4).value
    ex = multiscale_dmw(X, X, ScaleWeights.uniform((2, 3)), estimator="exact")
    assert ex.value == 0.0
    assert multiscale_dmw(X, X, w, K=80, L=16, seed=4, tuple_seeds=(1, 1)).value == 0.0


def test_scale_weights_validation():
    with pytest.raises(ParameterError):
        ScaleWeights((1, 2), np.array([0.5, 0.5]))
    with pytest.raises(ParameterError):
        ScaleWeights((2, 2), np.array([0.5, 0.5]))
    with pytest.raises(ParameterError):
        ScaleWeights((2, 3), np.array([0.5, 0.6]))
    assert np.allclose(ScaleWeights.inverse_order((2, 4)).weights, [2 / 3, 1 / 3])


def test_softmin_weights():
    assert np.allclose(softmin_weights([0.3, 0.3, 0.3], 0.7).weights, 1 / 3)
    w = softmin_weights([0.5, 0.2, 0.9], 1e-9).weights
    assert w[1] == pytest.approx(1.0, abs=1e-9)
    w = softmin_weights([1.0, 2.0], 1.0).weights
    direct = np.array([math.exp(-1), math.exp(-2)]) / (math.exp(-1) + math.exp(-2))
    assert np.allclose(w, direct, atol=1e-15)
    assert np.allclose(w, [1 / (1 + math.exp(-1)), math.exp(-1) / (1 + math.exp(-1))], atol=1e-15)
    with pytest.raises(ParameterError):
        softmin_weights([1.0], 0.0)
    # large bounds stay finite thanks to the shift
    assert np.all(np.isfinite(softmin_weights([1e4, 1e4 + 1], 1e-3).weights))


@given(st.lists(st.floats(0, 50), min_size=1, max_size=6), st.floats(1e-3, 10))
def test_softmin_is_a_probability_vector(bounds, tau):
    w = softmin_weights(bounds, tau).weights
    assert abs(w.sum() - 1) <= 1e-12
    # the smallest bound always carries the largest weight
    assert w[int(np.argmin(bounds))] == w.max()


def test_hierarchy_examples(rng):
    X, Y = space_counterexample_x(), space_counterexample_y()
    rep = hierarchy_check(X, Y, (2, 3))
    assert rep.monotone and rep.values[0] <= 1e-9 and rep.values[1] > 0
    rep = hierarchy_check(X, X, (2, 3, 4))
    assert rep.monotone and max(rep.values) == 0
    for _ in range(10):
        A, B = planar_space(rng, 4), planar_space(rng, 4)
        assert hierarchy_check(A, B, (2, 3, 4)).monotone


def test_law_validation():
    with pytest.raises(DimensionError):
        EmpiricalMatrixLaw(3, np.zeros((4, 2)), np.full(4, 0.25))
    with pytest.raises(ParameterError):
        EmpiricalMatrixLaw(3, np.zeros((4, n_pairs(3))), np.full(4, 0.25)).project(4)
