"""Finite metric measure spaces: graph metrics, point clouds, synthetic
generators and TU-format graph datasets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial.distance import pdist, squareform

from .core import DmwError, ParameterError, make_rng

log = logging.getLogger(__name__)

EXHAUSTIVE_TRIANGLE_LIMIT = 512
SAMPLED_TRIANGLE_CHECKS = 20000
SBM_RETRY_CAP = 64


class ConstructionError(DmwError, ValueError):
    pass


class GenerationError(DmwError, RuntimeError):
    pass


class IngestionError(DmwError, ValueError):
    pass


def _check_triangle(D: np.ndarray, tol: float) -> tuple[int, int, int] | None:
    m = D.shape[0]
    if m <= EXHAUSTIVE_TRIANGLE_LIMIT:
        for j in range(m):
            bad = D > D[:, j][:, None] + D[j, :][None, :] + tol
            if bad.any():
                i, k = np.argwhere(bad)[0]
                return int(i), j, int(k)
        return None
    rng = make_rng(m)
    idx = rng.integers(0, m, size=(SAMPLED_TRIANGLE_CHECKS, 3))
    i, j, k = idx.T
    bad = D[i, k] > D[i, j] + D[j, k] + tol
    if bad.any():
        t = int(np.argmax(bad))
        return int(i[t]), int(j[t]), int(k[t])
    return None


@dataclass(frozen=True, eq=False)
class FiniteMetricMeasureSpace:
    """A finite metric space with a probability vector on its points.

    The constructor validates the metric axioms (triangle inequality checked
    exhaustively up to 512 points, on sampled triples above) and the weights.
    """

    distances: np.ndarray
    weights: np.ndarray
    name: str = ""
    diameter: float = field(init=False)

    def __post_init__(self):
        D = np.array(self.distances, dtype=np.float64)
        w = np.array(self.weights, dtype=np.float64)
        if D.ndim != 2 or D.shape[0] != D.shape[1] or D.shape[0] == 0:
            raise ConstructionError(f"distance matrix must be square and non-empty, got {D.shape}")
        m = D.shape[0]
        if w.shape != (m,):
            raise ConstructionError(f"weights must have shape ({m},), got {w.shape}")
        if not np.all(np.isfinite(D)) or np.any(D < 0):
            raise ConstructionError("distances must be finite and nonnegative")
        if np.any(np.diag(D) != 0):
            raise ConstructionError("distance matrix must have a zero diagonal")
        if not np.array_equal(D, D.T):
            raise ConstructionError("distance matrix must be symmetric")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConstructionError(f"weights must be a probability vector (sum={w.sum()!r})")
        diam = float(D.max())
        bad = _check_triangle(D, 1e-12 * max(diam, 1.0))
        if bad is not None:
            i, j, k = bad
            raise ConstructionError(f"triangle inequality fails: d({i},{k}) > d({i},{j}) + d({j},{k})")
        D.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "distances", D)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "diameter", diam)

    @property
    def size(self) -> int:
        return self.distances.shape[0]

    @classmethod
    def uniform(cls, distances, name: str = "") -> FiniteMetricMeasureSpace:
        D = np.asarray(distances, dtype=np.float64)
        return cls(D, np.full(D.shape[0], 1.0 / D.shape[0]), name=name)

    def normalized(self) -> FiniteMetricMeasureSpace:
        """Copy rescaled to diameter 1 (unchanged if the diameter is 0)."""
        if self.diameter == 0:
            return self
        return FiniteMetricMeasureSpace(self.distances / self.diameter, self.weights, name=self.name)

    def relabeled(self, perm) -> FiniteMetricMeasureSpace:
        perm = np.asarray(perm)
        return FiniteMetricMeasureSpace(
            self.distances[np.ix_(perm, perm)], self.weights[perm], name=self.name
        )


# -- graphs -----------------------------------------------------------------


@dataclass(frozen=True)
class GraphSpec:
    n_nodes: int
    edges: tuple
    node_budget: int | None = None
    seed: int = 0
    name: str = ""


def _adjacency(n: int, edges: np.ndarray):
    if edges.size == 0:
        return coo_matrix((n, n)).tocsr()
    data = np.ones(2 * len(edges))
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    A = coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    A.data[:] = 1.0
    return A


def _edge_array(spec: GraphSpec) -> np.ndarray:
    edges = np.asarray(spec.edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= spec.n_nodes):
        raise ConstructionError(f"edge endpoint outside [0, {spec.n_nodes})")
    if np.any(edges[:, 0] == edges[:, 1]):
        loop = edges[edges[:, 0] == edges[:, 1]][0]
        raise ConstructionError(f"self-loop at node {int(loop[0])}")
    return edges


def _largest_component(A) -> np.ndarray:
    _, labels = connected_components(A, directed=False)
    counts = np.bincount(labels)
    # ties go to the component containing the smallest node index
    return np.flatnonzero(labels == np.argmax(counts))


def hop_distances(n_nodes: int, edges) -> np.ndarray:
    """All-pairs unweighted shortest-path hop counts (inf if unreachable)."""
    A = _adjacency(n_nodes, np.asarray(edges, dtype=np.int64).reshape(-1, 2))
    return shortest_path(A, method="D", directed=False, unweighted=True)


def space_from_graph(spec: GraphSpec) -> FiniteMetricMeasureSpace:
    """Shortest-path metric of an unweighted graph divided by its diameter,
    with the uniform node measure.

    With a node budget smaller than the node count, a uniform subset of that
    many nodes is drawn and the largest component of the induced subgraph is
    kept.
    """
    n = int(spec.n_nodes)
    if n < 1:
        raise ConstructionError("graph has no nodes")
    edges = _edge_array(spec)
    A = _adjacency(n, edges)
    budget = spec.node_budget
    if budget is not None and budget < 1:
        raise ParameterError(f"node budget must be positive, got {budget}")
    if budget is not None and budget < n:
        keep = np.sort(make_rng(spec.seed).choice(n, size=budget, replace=False))
        A = A[keep][:, keep]
        comp = _largest_component(A)
        A = A[comp][:, comp]
    hops = shortest_path(A, method="D", directed=False, unweighted=True)
    if np.isinf(hops).any():
        i, j = np.argwhere(np.isinf(hops))[0]
        raise ConstructionError(f"graph is disconnected: no path between nodes {int(i)} and {int(j)}")
    diam = hops.max()
    D = hops / diam if diam > 0 else hops
    return FiniteMetricMeasureSpace.uniform(D, name=spec.name)


def space_counterexample_x() -> FiniteMetricMeasureSpace:
    """Four-cycle shortest-path metric: opposite pairs at distance 2."""
    D = np.ones((4, 4)) - np.eye(4)
    D[0, 2] = D[2, 0] = D[1, 3] = D[3, 1] = 2.0
    return FiniteMetricMeasureSpace.uniform(D, name="counterexample-X")


def space_counterexample_y() -> FiniteMetricMeasureSpace:
    """Four points whose two distance-2 pairs share the first point."""
    D = np.ones((4, 4)) - np.eye(4)
    D[0, 1] = D[1, 0] = D[0, 2] = D[2, 0] = 2.0
    return FiniteMetricMeasureSpace.uniform(D, name="counterexample-Y")


# -- point clouds -------------------------------------------------------------


@dataclass(frozen=True)
class ShapeCloudSpec:
    shape: str = "circle"
    n_samples: int = 100
    delta: float = 0.0
    noise: float = 0.05
    seed: int = 0


def cloud_points(spec: ShapeCloudSpec, angles=None) -> np.ndarray:
    if spec.shape not in ("circle", "ellipse"):
        raise ParameterError(f"unknown shape {spec.shape!r}")
    if spec.n_samples < 2:
        raise ParameterError("need at least two samples")
    if spec.noise < 0 or spec.delta < 0:
        raise ParameterError("noise and eccentricity shift must be nonnegative")
    delta = spec.delta if spec.shape == "ellipse" else 0.0
    rng = make_rng(spec.seed)
    if angles is None:
        t = rng.uniform(0.0, 2 * np.pi, size=spec.n_samples)
    else:
        t = np.asarray(angles, dtype=np.float64)
        if t.shape != (spec.n_samples,):
            raise ParameterError("angle override must have one angle per sample")
    pts = np.column_stack([np.cos(t), (1.0 - delta) * np.sin(t)])
    if spec.noise > 0:
        pts = pts + spec.noise * rng.standard_normal(pts.shape)
    return pts


def space_from_cloud(spec: ShapeCloudSpec, angles=None, normalize: bool = False) -> FiniteMetricMeasureSpace:
    """Euclidean metric on a noisy circle/ellipse sample with uniform weights.

    ``angles`` overrides the random angle draw (noise is still applied).
    """
    D = squareform(pdist(cloud_points(spec, angles)))
    space = FiniteMetricMeasureSpace.uniform(D, name=f"{spec.shape}-{spec.delta:g}-{spec.seed}")
    return space.normalized() if normalize else space


# -- stochastic block model ---------------------------------------------------


@dataclass(frozen=True)
class SbmSpec:
    block_sizes: tuple
    p_in: float
    p_out: float
    seed: int = 0


def sample_sbm_edges(spec: SbmSpec, rng: np.random.Generator) -> np.ndarray:
    sizes = np.asarray(spec.block_sizes, dtype=np.int64)
    blocks = np.repeat(np.arange(len(sizes)), sizes)
    n = blocks.size
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(blocks[iu] == blocks[ju], spec.p_in, spec.p_out)
    hit = rng.random(iu.size) < prob
    return np.column_stack([iu[hit], ju[hit]])


def space_from_sbm(spec: SbmSpec, retries: int = SBM_RETRY_CAP) -> FiniteMetricMeasureSpace:
    """Graph metric of a connected SBM draw, resampling disconnected draws."""
    if not (0 <= spec.p_in <= 1 and 0 <= spec.p_out <= 1):
        raise ParameterError("edge probabilities must lie in [0, 1]")
    if len(spec.block_sizes) == 0 or min(spec.block_sizes) < 1:
        raise ParameterError("block sizes must be positive")
    n = int(sum(spec.block_sizes))
    rng = make_rng(spec.seed)
    for _ in range(retries):
        edges = sample_sbm_edges(spec, rng)
        A = _adjacency(n, edges)
        if connected_components(A, directed=False)[0] == 1:
            return space_from_graph(GraphSpec(n, edges, name=f"sbm-{n}-{spec.seed}"))
    raise GenerationError(f"no connected SBM sample after {retries} attempts")


# -- TU datasets ----------------------------------------------------------------


def _read_ints(path: Path, ncols: int) -> np.ndarray:
    if not path.exists():
        raise IngestionError(f"missing file: {path}")
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [s.strip() for s in line.split(",")]
            if len(parts) != ncols:
                raise IngestionError(f"{path}:{lineno}: expected {ncols} value(s), got {len(parts)}")
            try:
                rows.append([int(s) for s in parts])
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: not an integer: {line!r}") from None
    return np.asarray(rows, dtype=np.int64).reshape(-1, ncols)


def load_tu_dataset(directory, name: str, node_budget: int | None = None, seed: int = 0):
    """Read ``name_A.txt``, ``name_graph_indicator.txt`` and
    ``name_graph_labels.txt`` from ``directory``.

    Returns a list of ``(space, label)`` pairs in graph order. Disconnected
    graphs are reduced to their largest component (a warning is logged).
    """
    directory = Path(directory)
    edges = _read_ints(directory / f"{name}_A.txt", 2)
    indicator = _read_ints(directory / f"{name}_graph_indicator.txt", 1)[:, 0]
    labels = _read_ints(directory / f"{name}_graph_labels.txt", 1)[:, 0]
    if indicator.size == 0:
        raise IngestionError(f"{directory / f'{name}_graph_indicator.txt'}: no nodes")
    n_graphs = labels.size
    if indicator.min() < 1 or indicator.max() > n_graphs:
        raise IngestionError(
            f"graph indicator references graph ids in [{indicator.min()}, {indicator.max()}] "
            f"but {n_graphs} labels were read"
        )
    if np.any(np.diff(indicator) < 0):
        raise IngestionError("graph indicator is not sorted by graph id")
    n_nodes = indicator.size
    if edges.size and (edges.min() < 1 or edges.max() > n_nodes):
        bad = int(np.argmax((edges < 1).any(axis=1) | (edges > n_nodes).any(axis=1)))
        raise IngestionError(f"{directory / f'{name}_A.txt'}:{bad + 1}: node index outside [1, {n_nodes}]")
    edges = edges - 1
    gid = indicator - 1
    if edges.size:
        cross = gid[edges[:, 0]] != gid[edges[:, 1]]
        if cross.any():
            bad = int(np.argmax(cross))
            raise IngestionError(f"{directory / f'{name}_A.txt'}:{bad + 1}: edge joins two different graphs")
    starts = np.searchsorted(gid, np.arange(n_graphs))
    ends = np.searchsorted(gid, np.arange(n_graphs), side="right")
    out = []
    for g in range(n_graphs):
        lo, hi = starts[g], ends[g]
        if hi == lo:
            raise IngestionError(f"graph {g + 1} has no nodes")
        sel = edges[gid[edges[:, 0]] == g] - lo if edges.size else edges
        sel = sel[sel[:, 0] != sel[:, 1]]
        sel = np.unique(np.sort(sel, axis=1), axis=0) if sel.size else sel.reshape(-1, 2)
        m = hi - lo
        A = _adjacency(m, sel)
        ncomp, comp_labels = connected_components(A, directed=False)
        if ncomp > 1:
            keep = _largest_component(A)
            log.warning("graph %d of %s is disconnected (%d components); keeping %d of %d nodes",
                        g + 1, name, ncomp, keep.size, m)
            remap = -np.ones(m, dtype=np.int64)
            remap[keep] = np.arange(keep.size)
            sel = remap[sel]
            sel = sel[(sel >= 0).all(axis=1)]
            m = keep.size
        spec = GraphSpec(m, sel, node_budget=node_budget, seed=int(make_rng(seed, g).integers(2**63)),
                         name=f"{name}-{g + 1}")
        out.append((space_from_graph(spec), int(labels[g])))
    return out
