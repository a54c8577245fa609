"""Distance-matrix laws and the Wasserstein statistics built on them."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DimensionError,
    ParameterError,
    make_rng,
    n_pairs,
    pair_indices,
    pairwise_avg_cost,
    sample_directions,
)
from .ot import exact_ot, sinkhorn, w1d_pth_power
from .spaces import FiniteMetricMeasureSpace

# stream tags for make_rng
TUPLES = 1
DIRECTIONS = 2

ENUMERATION_BUDGET = 10**6
DIRECTION_BATCH = 64
TUPLE_CHUNK = 512


@dataclass(frozen=True, eq=False)
class EmpiricalMatrixLaw:
    """Weighted atoms in R^{N_n}; one row per distance vector."""

    order: int
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if atoms.ndim != 2 or atoms.shape[1] != n_pairs(self.order):
            raise DimensionError(f"atoms must have {n_pairs(self.order)} columns, got shape {atoms.shape}")
        if weights.shape != (atoms.shape[0],):
            raise DimensionError("one weight per atom required")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    def merged(self) -> EmpiricalMatrixLaw:
        """Merge identical atoms (exact comparison), summing their weights."""
        uniq, inverse = np.unique(self.atoms, axis=0, return_inverse=True)
        w = np.bincount(inverse.ravel(), weights=self.weights, minlength=uniq.shape[0])
        keep = w > 0
        return EmpiricalMatrixLaw(self.order, uniq[keep], w[keep])

    def project(self, k: int) -> EmpiricalMatrixLaw:
        """Push forward onto the distances among the first ``k`` tuple points."""
        if not 2 <= k <= self.order:
            raise ParameterError(f"cannot project order {self.order} onto order {k}")
        I, J = pair_indices(self.order)
        cols = np.flatnonzero(J < k)
        return EmpiricalMatrixLaw(k, self.atoms[:, cols], self.weights).merged()


@dataclass
class DmwEstimate:
    value: float
    p: float
    orders: tuple
    mode: str
    K: int | None = None
    L: int | None = None
    seed: int | None = None
    per_scale: dict = field(default_factory=dict)
    per_direction: np.ndarray | None = None
    timings: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)


def _check_order(n: int):
    if int(n) != n or n < 2:
        raise ParameterError(f"order must be an integer >= 2, got {n}")


def _tuple_indices(cdf: np.ndarray, n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random((count, n))
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)


def _atoms_from_tuples(D: np.ndarray, idx: np.ndarray, n: int) -> np.ndarray:
    I, J = pair_indices(n)
    return D[idx[:, I], idx[:, J]]


def _cdf(space: FiniteMetricMeasureSpace) -> np.ndarray:
    return np.cumsum(space.weights)


def sample_matrix_law(space: FiniteMetricMeasureSpace, n: int, K: int, rng) -> EmpiricalMatrixLaw:
    """K i.i.d. tuples of n points drawn (with replacement) from the space's
    measure, recorded as distance vectors with uniform weights."""
    _check_order(n)
    if K < 1:
        raise ParameterError(f"need K >= 1, got {K}")
    rng = make_rng(rng)
    idx = _tuple_indices(_cdf(space), n, K, rng)
    return EmpiricalMatrixLaw(n, _atoms_from_tuples(space.distances, idx, n), np.full(K, 1.0 / K))


def enumerate_matrix_law(space: FiniteMetricMeasureSpace, n: int, budget: int = ENUMERATION_BUDGET) -> EmpiricalMatrixLaw:
    """Exact order-n law by running over all m^n ordered tuples."""
    _check_order(n)
    m = space.size
    if m**n > budget:
        raise ParameterError(f"enumeration needs m^n = {m}^{n} = {m**n} tuples, budget is {budget}")
    idx = np.indices((m,) * n).reshape(n, -1).T
    w = np.prod(space.weights[idx], axis=1)
    keep = w > 0
    law = EmpiricalMatrixLaw(n, _atoms_from_tuples(space.distances, idx[keep], n), w[keep])
    return law.merged()


def empirical_dmw(law_x: EmpiricalMatrixLaw, law_y: EmpiricalMatrixLaw, p: float = 1.0,
                  solver: str = "exact", epsilon: float = 1e-2, **sinkhorn_kw) -> DmwEstimate:
    """W_p between two weighted atom sets under the pair-averaged norm."""
    if law_x.order != law_y.order:
        raise DimensionError(f"laws have different orders: {law_x.order} vs {law_y.order}")
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    lx, ly = law_x.merged(), law_y.merged()
    C = pairwise_avg_cost(lx.atoms, ly.atoms, p)
    if solver == "exact":
        plan = exact_ot(C, lx.weights, ly.weights)
        mode, details = "empirical-exact-ot", {"plan": plan}
    elif solver == "sinkhorn":
        plan, report = sinkhorn(C, lx.weights, ly.weights, epsilon, **sinkhorn_kw)
        mode, details = "empirical-sinkhorn", {"plan": plan, "report": report}
    else:
        raise ParameterError(f"unknown solver {solver!r}")
    value = max(plan.cost, 0.0) ** (1.0 / p)
    return DmwEstimate(value=value, p=p, orders=(law_x.order,), mode=mode,
                       K=law_x.size, details=details)


def exact_dmw(space_x, space_y, n: int, p: float = 1.0) -> float:
    """DMW of order n computed from the enumerated laws with exact OT."""
    lx = enumerate_matrix_law(space_x, n)
    ly = enumerate_matrix_law(space_y, n)
    return empirical_dmw(lx, ly, p).value


# -- slicing ------------------------------------------------------------------------


def project_atoms(atoms: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """``atoms @ directions.T`` accumulated entry by entry in a fixed order,
    so results do not depend on how rows are batched."""
    out = np.zeros((atoms.shape[0], directions.shape[0]))
    for e in range(atoms.shape[1]):
        out += atoms[:, e:e + 1] * directions[:, e]
    return out


def _sorted_block(space, n, K, block, rng_factory, atoms=None) -> np.ndarray:
    out = np.empty((K, block.shape[0]))
    if atoms is not None:
        out[:] = project_atoms(atoms, block)
    else:
        cdf = _cdf(space)
        rng = rng_factory()
        for k0 in range(0, K, TUPLE_CHUNK):
            k1 = min(K, k0 + TUPLE_CHUNK)
            chunk = _atoms_from_tuples(space.distances, _tuple_indices(cdf, n, k1 - k0, rng), n)
            out[k0:k1] = project_atoms(chunk, block)
    out.sort(axis=0)
    return out


def sorted_projections(space: FiniteMetricMeasureSpace, n: int, K: int, directions: np.ndarray,
                       rng_factory) -> np.ndarray:
    """Column-sorted projections of K sampled distance vectors, shape (K, L).

    ``rng_factory()`` must return a fresh generator for the tuple stream.
    """
    atoms = _atoms_from_tuples(space.distances, _tuple_indices(_cdf(space), n, K, rng_factory()), n)
    return np.concatenate(
        [_sorted_block(space, n, K, directions[s:s + DIRECTION_BATCH], rng_factory, atoms)
         for s in range(0, directions.shape[0], DIRECTION_BATCH)],
        axis=1,
    )


def sliced_costs_sorted(sx: np.ndarray, sy: np.ndarray, p: float) -> np.ndarray:
    """Per-direction W_p^p from column-sorted equal-size samples."""
    diff = np.abs(sx - sy)
    if p != 1:
        diff = diff**p
    return diff.mean(axis=0)


def sliced_costs_laws(law_x: EmpiricalMatrixLaw, law_y: EmpiricalMatrixLaw, directions, p: float = 1.0) -> np.ndarray:
    """Per-direction W_p^p between the projected (weighted) laws."""
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if law_x.order != law_y.order:
        raise DimensionError("laws have different orders")
    px = project_atoms(law_x.atoms, directions)
    py = project_atoms(law_y.atoms, directions)
    return np.array([
        w1d_pth_power(px[:, l], py[:, l], p, law_x.weights, law_y.weights)
        for l in range(directions.shape[0])
    ])


def direction_matrix(n: int, L: int, p: float, mode: str, seed) -> np.ndarray:
    return sample_directions(n, L, p, mode, make_rng(seed, DIRECTIONS, n))


def sliced_dmw(space_x, space_y, n: int, K: int, L: int, p: float = 1.0, mode: str = "euclidean",
               seed: int = 0, tuple_seeds=None, directions=None, streaming: bool = False) -> DmwEstimate:
    """Monte Carlo sliced DMW: K tuples per space, L directions, sorted 1D
    transport per direction, p-th root of the average cost.

    Tuple streams default to two independent children of ``seed``;
    ``tuple_seeds=(sx, sy)`` sets them explicitly (equal seeds on the same
    space give identical samples). ``directions`` pins the slicing set.
    """
    _check_order(n)
    if K < 1 or L < 1:
        raise ParameterError(f"need K >= 1 and L >= 1, got K={K}, L={L}")
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    if tuple_seeds is None:
        fx = lambda: make_rng(seed, TUPLES, n, 0)  # noqa: E731
        fy = lambda: make_rng(seed, TUPLES, n, 1)  # noqa: E731
    else:
        sx, sy = tuple_seeds
        fx = lambda: make_rng(sx, TUPLES, n)  # noqa: E731
        fy = lambda: make_rng(sy, TUPLES, n)  # noqa: E731
    t0 = time.perf_counter()
    if directions is None:
        theta = direction_matrix(n, L, p, mode, seed)
    else:
        theta = np.atleast_2d(np.asarray(directions, dtype=np.float64))
        if theta.shape != (L, n_pairs(n)):
            raise DimensionError(f"pinned directions must have shape {(L, n_pairs(n))}, got {theta.shape}")
    t1 = time.perf_counter()
    if streaming:
        # regenerate tuples per direction batch; O(K) memory per direction
        ax = ay = None
    else:
        ax = _atoms_from_tuples(space_x.distances, _tuple_indices(_cdf(space_x), n, K, fx()), n)
        ay = _atoms_from_tuples(space_y.distances, _tuple_indices(_cdf(space_y), n, K, fy()), n)
    t2 = time.perf_counter()
    costs = np.concatenate([
        sliced_costs_sorted(_sorted_block(space_x, n, K, theta[s:s + DIRECTION_BATCH], fx, ax),
                            _sorted_block(space_y, n, K, theta[s:s + DIRECTION_BATCH], fy, ay), p)
        for s in range(0, L, DIRECTION_BATCH)
    ])
    value = float(np.mean(costs)) ** (1.0 / p)
    t3 = time.perf_counter()
    return DmwEstimate(value=value, p=p, orders=(n,), mode="sliced", K=K, L=L, seed=seed,
                       per_direction=costs,
                       timings={"directions_s": t1 - t0, "sampling_s": t2 - t1, "slicing_s": t3 - t2},
                       details={"direction_mode": mode, "streaming": streaming})


# -- multi-scale -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScaleWeights:
    scales: tuple
    weights: np.ndarray

    def __post_init__(self):
        scales = tuple(int(s) for s in self.scales)
        w = np.asarray(self.weights, dtype=np.float64)
        if len(scales) == 0 or len(set(scales)) != len(scales) or min(scales) < 2:
            raise ParameterError(f"scales must be distinct integers >= 2, got {self.scales}")
        if w.shape != (len(scales),) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError("scale weights must be a probability vector over the scales")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, scales) -> ScaleWeights:
        return cls(tuple(scales), np.full(len(scales), 1.0 / len(scales)))

    @classmethod
    def inverse_order(cls, scales) -> ScaleWeights:
        w = 1.0 / np.asarray(scales, dtype=np.float64)
        return cls(tuple(scales), w / w.sum())

    def items(self):
        return zip(self.scales, self.weights)


def softmin_weights(bounds, tau: float, scales=None) -> ScaleWeights:
    """Entropy-regularized minimizer of the weighted error bound:
    ``alpha_n`` proportional to ``exp(-B_n / tau)``."""
    if not tau > 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    B = np.asarray(bounds, dtype=np.float64)
    if B.ndim != 1 or B.size == 0 or not np.all(np.isfinite(B)):
        raise ParameterError("bounds must be a non-empty finite vector")
    if scales is None:
        scales = tuple(range(2, 2 + B.size))
    z = np.exp(-(B - B.min()) / tau)
    return ScaleWeights(tuple(scales), z / z.sum())


def multiscale_dmw(space_x, space_y, weights: ScaleWeights, estimator: str = "sliced", **config) -> DmwEstimate:
    """Weighted sum of per-order statistics.

    ``estimator='sliced'`` forwards ``config`` to :func:`sliced_dmw`;
    ``'exact'`` uses enumerated laws and exact OT at every order.
    """
    per_scale = {}
    for n, _ in weights.items():
        if estimator == "sliced":
            per_scale[n] = sliced_dmw(space_x, space_y, n, **config).value
        elif estimator == "exact":
            per_scale[n] = exact_dmw(space_x, space_y, n, config.get("p", 1.0))
        else:
            raise ParameterError(f"unknown estimator {estimator!r}")
    value = float(sum(a * per_scale[n] for n, a in weights.items()))
    return DmwEstimate(value=value, p=config.get("p", 1.0), orders=weights.scales,
                       mode="sliced" if estimator == "sliced" else "exact-enumerated",
                       K=config.get("K"), L=config.get("L"), seed=config.get("seed"),
                       per_scale=per_scale)


@dataclass
class HierarchyReport:
    orders: tuple
    values: tuple
    monotone: bool
    max_violation: float


def hierarchy_check(space_x, space_y, orders, p: float = 1.0, slack: float = 1e-9) -> HierarchyReport:
    """Exact DMW at each order; flags any decrease larger than ``slack``."""
    orders = tuple(sorted(orders))
    values = tuple(exact_dmw(space_x, space_y, n, p) for n in orders)
    drops = [values[k] - values[k + 1] for k in range(len(values) - 1)]
    worst = max(drops, default=-math.inf)
    return HierarchyReport(orders, values, worst <= slack, max(worst, 0.0))
