"""Positive-definite kernels from sliced multi-scale DMW, MMD statistics
and the permutation two-sample test."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .core import DimensionError, ParameterError, make_rng
from .estimators import TUPLES, ScaleWeights, direction_matrix, sorted_projections

PSD_RELATIVE_TOL = 1e-8


def space_tuple_seeds(seed: int, m: int) -> np.ndarray:
    """Per-space tuple seeds drawn from the master seed; space ``i`` reuses
    its seed in every pairwise comparison."""
    return make_rng(seed, TUPLES).integers(0, 2**63, size=m, dtype=np.uint64)


def msdmw_embeddings(spaces, weights: ScaleWeights, K: int, L: int, mode: str = "euclidean",
                     seed: int = 0, p: float = 1.0) -> np.ndarray:
    """Stack of weighted sorted-projection embeddings, one row per space.

    The L1 distance between two rows equals the sliced multi-scale DMW
    (p=1) computed with shared directions and each space's own tuple stream.
    """
    if p != 1:
        raise ParameterError(f"kernel dissimilarities require p=1 (positive definiteness only holds for p=1), got p={p}")
    if K < 1 or L < 1:
        raise ParameterError(f"need K >= 1 and L >= 1, got K={K}, L={L}")
    spaces = list(spaces)
    seeds = space_tuple_seeds(seed, len(spaces))
    blocks = []
    for n, alpha in weights.items():
        theta = direction_matrix(n, L, 1.0, mode, seed)
        E = np.empty((len(spaces), K * L))
        for i, space in enumerate(spaces):
            s = int(seeds[i])
            E[i] = sorted_projections(space, n, K, theta, lambda s=s: make_rng(s, TUPLES, n)).ravel()
        blocks.append((alpha / (K * L)) * E)
    return np.concatenate(blocks, axis=1)


def msdmw_dissimilarity_matrix(spaces, weights: ScaleWeights, K: int, L: int, mode: str = "euclidean",
                               seed: int = 0, p: float = 1.0) -> np.ndarray:
    """Pairwise sliced multi-scale DMW (p=1) under shared samples."""
    E = msdmw_embeddings(spaces, weights, K, L, mode=mode, seed=seed, p=p)
    D = cdist(E, E, metric="cityblock")
    D = np.maximum(D, D.T)
    np.fill_diagonal(D, 0.0)
    return D


def median_heuristic(D: np.ndarray) -> float:
    """Bandwidth ``1 / median`` of the positive off-diagonal dissimilarities."""
    D = np.asarray(D, dtype=np.float64)
    off = D[np.triu_indices(D.shape[0], k=1)]
    off = off[off > 0]
    if off.size == 0:
        return 1.0
    return float(1.0 / np.median(off))


@dataclass
class GramMatrix:
    values: np.ndarray
    lam: float
    min_eigenvalue: float
    psd: bool
    provenance: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.values.shape[0]


def gram_from_dissimilarity(D, lam: float, provenance: dict | None = None, clip: bool = False) -> GramMatrix:
    """Entrywise ``exp(-lam * D)`` with an attached eigenvalue check.

    Indefiniteness beyond tolerance is flagged rather than raised. With
    ``clip=True`` negative eigenvalues are zeroed (for export only); the
    reported minimum eigenvalue is always that of the unclipped matrix.
    """
    D = np.asarray(D, dtype=np.float64)
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DimensionError(f"dissimilarity matrix must be square, got {D.shape}")
    if not np.array_equal(D, D.T) or np.any(np.diag(D) != 0):
        raise ParameterError("dissimilarity matrix must be symmetric with zero diagonal")
    G = np.exp(-lam * D)
    evals, evecs = np.linalg.eigh(G)
    min_eig = float(evals[0])
    psd = min_eig >= -PSD_RELATIVE_TOL * float(np.max(np.diag(G)))
    prov = dict(provenance or {})
    if clip and min_eig < 0:
        G = (evecs * np.maximum(evals, 0.0)) @ evecs.T
        G = 0.5 * (G + G.T)
        prov["spectral_clip"] = True
    return GramMatrix(values=G, lam=float(lam), min_eigenvalue=min_eig, psd=bool(psd), provenance=prov)


def _gram_values(gram) -> np.ndarray:
    return gram.values if isinstance(gram, GramMatrix) else np.asarray(gram, dtype=np.float64)


def _groups(labels, m):
    labels = np.asarray(labels)
    if labels.shape != (m,):
        raise DimensionError(f"need one label per Gram row ({m}), got shape {labels.shape}")
    kinds = np.unique(labels)
    if kinds.size != 2:
        raise ParameterError(f"need exactly two groups, got labels {kinds.tolist()}")
    mask = labels == kinds[1]
    a, b = int((~mask).sum()), int(mask.sum())
    if a < 2 or b < 2:
        raise ParameterError(f"each group needs at least 2 members, got sizes {a} and {b}")
    return mask


def _mmd2_batch(K: np.ndarray, Z: np.ndarray) -> np.ndarray:
    # Z: (P, m) boolean indicators of the second group
    Zb = Z.astype(np.float64)
    Za = 1.0 - Zb
    b = Zb.sum(axis=1)
    a = Za.sum(axis=1)
    diag = np.diag(K)
    KZb = Zb @ K
    s_bb = np.einsum("pi,pi->p", KZb, Zb) - Zb @ diag
    s_ab = np.einsum("pi,pi->p", KZb, Za)
    s_aa = np.einsum("pi,pi->p", Za @ K, Za) - Za @ diag
    return s_aa / (a * (a - 1)) + s_bb / (b * (b - 1)) - 2.0 * s_ab / (a * b)


def mmd2_unbiased(gram, labels) -> float:
    """Unbiased MMD^2 between the two label groups of a Gram matrix."""
    K = _gram_values(gram)
    mask = _groups(labels, K.shape[0])
    return float(_mmd2_batch(K, mask[None, :])[0])


def mmd2_biased(gram, idx_a, idx_b) -> float:
    """Biased (V-statistic) MMD^2 between two index sets, which may overlap;
    zero when both sets are the same."""
    K = _gram_values(gram)
    a = np.asarray(idx_a, dtype=np.int64)
    b = np.asarray(idx_b, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        raise ParameterError("index sets must be non-empty")
    return float(K[np.ix_(a, a)].mean() + K[np.ix_(b, b)].mean() - 2.0 * K[np.ix_(a, b)].mean())


@dataclass
class TwoSampleResult:
    statistic: float
    n_permutations: int
    p_value: float
    null_statistics: np.ndarray
    alpha: float
    reject: bool
    estimator: str = "unbiased-mmd2"


def permutation_test(gram, labels, n_permutations: int = 199, alpha: float = 0.05, seed=0,
                     batch: int = 256) -> TwoSampleResult:
    """Label-permutation test on a fixed Gram; p-value ``(1 + #{null >= obs}) / (P + 1)``."""
    if n_permutations < 1:
        raise ParameterError(f"need at least one permutation, got {n_permutations}")
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    K = _gram_values(gram)
    mask = _groups(labels, K.shape[0])
    observed = float(_mmd2_batch(K, mask[None, :])[0])
    rng = make_rng(seed)
    null = np.empty(n_permutations)
    for s in range(0, n_permutations, batch):
        P = min(batch, n_permutations - s)
        perms = np.argsort(rng.random((P, mask.size)), axis=1)
        null[s:s + P] = _mmd2_batch(K, mask[perms])
    # tolerate round-off when a permutation reproduces the observed split
    exceed = int(np.sum(null >= observed - 1e-12 * max(1.0, abs(observed))))
    p_value = (1 + exceed) / (n_permutations + 1)
    return TwoSampleResult(statistic=observed, n_permutations=n_permutations, p_value=p_value,
                           null_statistics=null, alpha=alpha, reject=p_value <= alpha)


# -- Gram export -----------------------------------------------------------------------


def write_gram(path, gram: GramMatrix, labels, dataset: str = "", seed=None, config: dict | None = None):
    """Text export: ``#``-prefixed header lines followed by one row per space,
    in input order."""
    labels = [str(x) for x in labels]
    if len(labels) != gram.size:
        raise DimensionError(f"need {gram.size} labels, got {len(labels)}")
    header = {
        "dataset": dataset,
        "size": gram.size,
        "lambda": gram.lam,
        "seed": seed,
        "labels": labels,
        "min_eigenvalue": gram.min_eigenvalue,
        "psd": gram.psd,
        "config": config or {},
        "provenance": gram.provenance,
    }
    with open(path, "w") as fh:
        for key, value in header.items():
            fh.write(f"# {key}: {json.dumps(value, sort_keys=True, default=str)}\n")
        for row in gram.values:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def read_gram(path) -> tuple[np.ndarray, dict]:
    """Inverse of :func:`write_gram`: returns ``(values, header)``."""
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                header[key.strip()] = json.loads(value)
            elif line.strip():
                rows.append([float(x) for x in line.split()])
    return np.array(rows), header
