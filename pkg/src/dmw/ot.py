"""Discrete optimal transport: sorted 1D transport, an exact transportation
simplex, a permutation fast path and log-domain Sinkhorn."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import DimensionError, NumericalError, ParameterError

MARGINAL_TOL = 1e-9
# consecutive zero-step pivots before switching to smallest-index pricing
DEGENERATE_STREAK = 20


@dataclass
class TransportPlan:
    coupling: np.ndarray
    cost: float
    row_residual: np.ndarray
    col_residual: np.ndarray
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    iterations: int = 0
    dual_objective: float | None = None

    @property
    def max_residual(self) -> float:
        return float(max(np.abs(self.row_residual).max(), np.abs(self.col_residual).max()))


@dataclass
class SinkhornReport:
    epsilon: float
    iterations: int
    residual: float
    converged: bool
    tol: float


def _plan(P: np.ndarray, C: np.ndarray, a: np.ndarray, b: np.ndarray, **kw) -> TransportPlan:
    return TransportPlan(
        coupling=P,
        cost=float(np.sum(P * C)),
        row_residual=P.sum(axis=1) - a,
        col_residual=P.sum(axis=0) - b,
        **kw,
    )


def _check_problem(cost, a, b):
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] == 0 or C.shape[1] == 0:
        raise ParameterError(f"cost must be a non-empty matrix, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ParameterError("cost matrix has non-finite entries")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (C.shape[0],) or b.shape != (C.shape[1],):
        raise ParameterError(f"weights {a.shape}, {b.shape} do not match cost {C.shape}")
    if np.any(a < 0) or np.any(b < 0):
        raise ParameterError("weights must be nonnegative")
    if abs(a.sum() - b.sum()) > MARGINAL_TOL:
        raise ParameterError(f"marginals have different mass: {a.sum()!r} vs {b.sum()!r}")
    return C, a, b


# -- one dimension ---------------------------------------------------------------


def w1d_pth_power(a_values, b_values, p: float = 1.0, a_weights=None, b_weights=None) -> float:
    """``W_p^p`` between two discrete measures on the line.

    Equal-size uniform samples use the sorted matching; otherwise the
    quantile coupling is built by merging the two cumulative weight grids.
    """
    x = np.asarray(a_values, dtype=np.float64).ravel()
    y = np.asarray(b_values, dtype=np.float64).ravel()
    if x.size == 0 or y.size == 0:
        raise ParameterError("empty measure")
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    if a_weights is None and b_weights is None and x.size == y.size:
        diff = np.abs(np.sort(x) - np.sort(y))
        return float(np.mean(diff if p == 1 else diff**p))
    wa = np.full(x.size, 1.0 / x.size) if a_weights is None else np.asarray(a_weights, dtype=np.float64)
    wb = np.full(y.size, 1.0 / y.size) if b_weights is None else np.asarray(b_weights, dtype=np.float64)
    if wa.shape != x.shape or wb.shape != y.shape:
        raise ParameterError("weights must match values")
    ia = np.argsort(x, kind="stable")
    ib = np.argsort(y, kind="stable")
    x, wa = x[ia], wa[ia]
    y, wb = y[ib], wb[ib]
    ca = np.cumsum(wa)
    cb = np.cumsum(wb)
    ca /= ca[-1]
    cb /= cb[-1]
    ca[-1] = cb[-1] = 1.0
    grid = np.union1d(ca, cb)
    mass = np.diff(grid, prepend=0.0)
    qa = np.minimum(np.searchsorted(ca, grid, side="left"), x.size - 1)
    qb = np.minimum(np.searchsorted(cb, grid, side="left"), y.size - 1)
    diff = np.abs(x[qa] - y[qb])
    return float(np.sum(mass * (diff if p == 1 else diff**p)))


# -- exact transportation simplex ----------------------------------------------------


def _vogel(C: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Vogel approximation: returns ``m + n - 1`` basic cells and their flows."""
    m, n = C.shape
    s = a.copy()
    d = b.copy()
    rows = np.ones(m, dtype=bool)
    cols = np.ones(n, dtype=bool)
    M = C.copy()
    cells = []
    nr, nc = m, n
    while True:
        if nr == 1 or nc == 1:
            if nr == 1:
                i = int(np.flatnonzero(rows)[0])
                cells.extend(((i, int(j)), d[j]) for j in np.flatnonzero(cols))
            else:
                j = int(np.flatnonzero(cols)[0])
                cells.extend(((int(i), j), s[i]) for i in np.flatnonzero(rows))
            return cells
        ar = np.flatnonzero(rows)
        ac = np.flatnonzero(cols)
        two_r = np.partition(M[ar][:, ac], 1, axis=1)[:, :2]
        two_c = np.partition(M[ar][:, ac], 1, axis=0)[:2, :]
        pen_r = two_r[:, 1] - two_r[:, 0]
        pen_c = two_c[1, :] - two_c[0, :]
        kr = int(np.argmax(pen_r))
        kc = int(np.argmax(pen_c))
        if pen_r[kr] >= pen_c[kc]:
            i = int(ar[kr])
            j = int(ac[np.argmin(M[i, ac])])
        else:
            j = int(ac[kc])
            i = int(ar[np.argmin(M[ar, j])])
        if s[i] <= d[j]:
            x = s[i]
            s[i] = 0.0
            d[j] = max(d[j] - x, 0.0)
            rows[i] = False
            nr -= 1
        else:
            x = d[j]
            d[j] = 0.0
            s[i] = max(s[i] - x, 0.0)
            cols[j] = False
            nc -= 1
        cells.append(((i, j), x))


class _Basis:
    """Basic cells as a spanning tree of the bipartite row/column graph,
    rooted at row 0. Nodes ``0..m-1`` are rows, ``m..m+n-1`` columns."""

    def __init__(self, m: int, n: int, cells):
        self.m, self.n = m, n
        self.X = np.zeros((m, n))
        self.basic = np.zeros((m, n), dtype=bool)
        adj = [[] for _ in range(m + n)]
        for (i, j), x in cells:
            self.X[i, j] = x
            self.basic[i, j] = True
            adj[i].append(m + j)
            adj[m + j].append(i)
        self.parent = [-1] * (m + n)
        self.depth = [0] * (m + n)
        self.children = [set() for _ in range(m + n)]
        seen = [False] * (m + n)
        seen[0] = True
        queue = deque([0])
        count = 1
        while queue:
            node = queue.popleft()
            for nb in adj[node]:
                if not seen[nb]:
                    seen[nb] = True
                    count += 1
                    self.parent[nb] = node
                    self.depth[nb] = self.depth[node] + 1
                    self.children[node].add(nb)
                    queue.append(nb)
        if count != m + n or len(cells) != m + n - 1:
            raise NumericalError("transportation basis is not a spanning tree")

    def potentials(self, C):
        m = self.m
        u = np.zeros(m)
        v = np.zeros(self.n)
        queue = deque([0])
        while queue:
            node = queue.popleft()
            for ch in self.children[node]:
                if node < m:
                    v[ch - m] = C[node, ch - m] - u[node]
                else:
                    u[ch] = C[ch, node - m] - v[node - m]
                queue.append(ch)
        return u, v

    def cycle(self, a: int, b: int):
        """Tree path from ``a`` to ``b`` and the nodes on ``a``'s side of it."""
        parent, depth = self.parent, self.depth
        left, right = [a], [b]
        while a != b:
            if depth[a] >= depth[b]:
                a = parent[a]
                left.append(a)
            else:
                b = parent[b]
                right.append(b)
        return left + right[-2::-1], left

    def reattach(self, child: int, new_root: int, new_parent: int) -> list[int]:
        """Detach the subtree of ``child``, re-root it at ``new_root`` and hang
        it below ``new_parent``. Returns the subtree's nodes."""
        parent, children = self.parent, self.children
        node, newpar = new_root, new_parent
        while True:
            oldpar = parent[node]
            children[oldpar].discard(node)
            parent[node] = newpar
            children[newpar].add(node)
            if node == child:
                break
            newpar, node = node, oldpar
        depth = self.depth
        depth[new_root] = depth[new_parent] + 1
        nodes = [new_root]
        k = 0
        while k < len(nodes):
            node = nodes[k]
            d = depth[node] + 1
            for ch in children[node]:
                depth[ch] = d
                nodes.append(ch)
            k += 1
        return nodes


def _transport_simplex(C: np.ndarray, a: np.ndarray, b: np.ndarray, max_pivots: int | None = None):
    m, n = C.shape
    basis = _Basis(m, n, _vogel(C, a, b))
    u, v = basis.potentials(C)
    X = basis.X
    scale = max(1.0, float(np.abs(C).max()))
    tol = 1e-12 * scale
    if max_pivots is None:
        max_pivots = 50 * (m + n) * max(m, n) + 1000
    streak = 0
    R = np.empty_like(C)
    for pivot in range(max_pivots + 1):
        np.subtract(C, u[:, None], out=R)
        R -= v[None, :]
        if streak >= DEGENERATE_STREAK:
            neg = np.flatnonzero(R.ravel() < -tol)
            if neg.size == 0:
                return X, u, v, pivot
            flat = int(neg[0])
        else:
            flat = int(np.argmin(R))
            if R.flat[flat] >= -tol:
                return X, u, v, pivot
        i, j = divmod(flat, n)
        red = R[i, j]
        nodes, left = basis.cycle(i, m + j)
        edges = []
        for k in range(len(nodes) - 1):
            x, y = nodes[k], nodes[k + 1]
            edges.append((x, y - m) if x < m else (y, x - m))
        minus = edges[0::2]
        plus = edges[1::2]
        theta = min(X[e] for e in minus)
        leave = min((e for e in minus if X[e] == theta), key=lambda e: e[0] * n + e[1])
        for e in minus:
            X[e] = max(X[e] - theta, 0.0)
        for e in plus:
            X[e] += theta
        X[leave] = 0.0
        basis.basic[leave] = False
        X[i, j] = theta
        basis.basic[i, j] = True
        streak = streak + 1 if theta == 0.0 else 0
        r, c = leave[0], m + leave[1]
        child = r if basis.parent[r] == c else c
        if child in left:
            moved = basis.reattach(child, i, m + j)
            shift = red
        else:
            moved = basis.reattach(child, m + j, i)
            shift = -red
        moved = np.asarray(moved)
        u[moved[moved < m]] += shift
        v[moved[moved >= m] - m] -= shift
    raise NumericalError(f"transportation simplex did not terminate within {max_pivots} pivots")


def exact_ot(cost, a_weights, b_weights) -> TransportPlan:
    """Optimal coupling of two discrete measures by the transportation simplex.

    The returned plan carries dual potentials ``u, v``; at termination every
    reduced cost ``C_ij - u_i - v_j`` is nonnegative up to rounding and the
    dual objective equals the primal cost.
    """
    C, a, b = _check_problem(cost, a_weights, b_weights)
    ra = np.flatnonzero(a > 0)
    cb = np.flatnonzero(b > 0)
    if ra.size == 0:
        raise ParameterError("marginals carry no mass")
    Cs = C[np.ix_(ra, cb)]
    bs = b[cb] * (a.sum() / b.sum())
    Xs, us, vs, pivots = _transport_simplex(Cs, a[ra], bs)
    X = np.zeros_like(C)
    X[np.ix_(ra, cb)] = Xs
    # extend potentials to dropped atoms while keeping dual feasibility
    v = np.empty(C.shape[1])
    v[cb] = vs
    mask_b = np.ones(C.shape[1], dtype=bool)
    mask_b[cb] = False
    if mask_b.any():
        v[mask_b] = (C[ra][:, mask_b] - us[:, None]).min(axis=0)
    u = np.empty(C.shape[0])
    u[ra] = us
    mask_a = np.ones(C.shape[0], dtype=bool)
    mask_a[ra] = False
    if mask_a.any():
        u[mask_a] = (C[mask_a] - v[None, :]).min(axis=1)
    return _plan(X, C, a, b, u=u, v=v, iterations=pivots, dual_objective=float(a @ u + b @ v))


def assignment_ot(cost) -> TransportPlan:
    """Uniform square problem solved as a linear assignment (permutation plan)."""
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] == 0:
        raise ParameterError(f"assignment needs a non-empty square cost, got {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ParameterError("cost matrix has non-finite entries")
    K = C.shape[0]
    rows, cols = linear_sum_assignment(C)
    P = np.zeros_like(C)
    P[rows, cols] = 1.0 / K
    w = np.full(K, 1.0 / K)
    return _plan(P, C, w, w, iterations=0)


# -- entropic ---------------------------------------------------------------------------


def round_to_marginals(P, a_weights, b_weights) -> np.ndarray:
    """Project an approximate plan onto the exact transport polytope by
    shrinking overfull rows and columns and redistributing the deficit."""
    P = np.array(P, dtype=np.float64)
    a = np.asarray(a_weights, dtype=np.float64)
    b = np.asarray(b_weights, dtype=np.float64)
    r = P.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        P *= np.where(r > a, a / r, 1.0)[:, None]
        c = P.sum(axis=0)
        P *= np.where(c > b, b / c, 1.0)[None, :]
    da = a - P.sum(axis=1)
    db = b - P.sum(axis=0)
    mass = da.sum()
    if mass > 0:
        P += np.outer(da, db) / mass
    return P


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    # lean logsumexp; scipy's version dominates the cost on small problems
    m = x.max(axis=axis, keepdims=True)
    m[~np.isfinite(m)] = 0.0
    with np.errstate(divide="ignore"):
        return np.log(np.exp(x - m).sum(axis=axis)) + np.squeeze(m, axis=axis)


def sinkhorn(cost, a_weights, b_weights, epsilon: float, max_iters: int = 10000, tol: float = 1e-7,
             init=None):
    """Log-domain Sinkhorn scaling.

    Stops once the max-norm marginal residual drops below ``tol``. Returns the
    plan (its ``cost`` is the unregularized transport cost, ``u``/``v`` the
    dual potentials) and a report. ``init=(u, v)`` warm-starts the potentials.
    """
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if max_iters < 0:
        raise ParameterError("max_iters must be nonnegative")
    C, a, b = _check_problem(cost, a_weights, b_weights)
    with np.errstate(divide="ignore"):
        loga = np.log(a)
        logb = np.log(b)
    with np.errstate(over="ignore"):
        Ce = C / epsilon
    if init is None:
        f = np.zeros(C.shape[0])
        g = np.zeros(C.shape[1])
    else:
        f = np.array(init[0], dtype=np.float64) / epsilon
        g = np.array(init[1], dtype=np.float64) / epsilon
        if f.shape != a.shape or g.shape != b.shape:
            raise DimensionError("warm-start potentials do not match the marginals")
        f[~np.isfinite(f)] = 0.0
        g[~np.isfinite(g)] = 0.0
    it = 0
    converged = False

    def current():
        with np.errstate(under="ignore"):
            return np.exp(f[:, None] + g[None, :] - Ce)

    P = current()
    residual = float(max(np.abs(P.sum(1) - a).max(), np.abs(P.sum(0) - b).max()))
    finite_a = np.isfinite(loga)
    finite_b = np.isfinite(logb)
    while it < max_iters:
        # potentials are kept in units of epsilon; overflow is caught below
        with np.errstate(over="ignore", invalid="ignore"):
            f = loga - _lse(g[None, :] - Ce, axis=1)
            g = logb - _lse(f[:, None] - Ce, axis=0)
        it += 1
        if not (np.all(np.isfinite(f[finite_a])) and np.all(np.isfinite(g[finite_b]))):
            raise NumericalError(f"Sinkhorn produced non-finite potentials (epsilon={epsilon})")
        P = current()
        # columns are exact after the g update up to round-off
        residual = float(max(np.abs(P.sum(1) - a).max(), np.abs(P.sum(0) - b).max()))
        if not np.isfinite(residual):
            raise NumericalError(f"Sinkhorn produced a non-finite plan (epsilon={epsilon})")
        if residual < tol:
            converged = True
            break
    plan = _plan(P, C, a, b, u=epsilon * f, v=epsilon * g, iterations=it)
    return plan, SinkhornReport(epsilon=epsilon, iterations=it, residual=residual, converged=converged, tol=tol)
