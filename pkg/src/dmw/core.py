"""Shared numeric primitives: pair indexing, the pair-averaged norm,
slicing directions and seeded random streams."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DmwError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(DmwError, ValueError):
    pass


class ParameterError(DmwError, ValueError):
    pass


class NumericalError(DmwError, ArithmeticError):
    pass


DIRECTION_MODES = ("dual", "euclidean")


def n_pairs(n: int) -> int:
    """Number of unordered pairs among ``n`` points."""
    return n * (n - 1) // 2


def pair_offset(i: int, j: int, n: int) -> int:
    """Row-major offset of the pair ``(i, j)``, ``i < j``, among ``n`` points."""
    if not (0 <= i < j < n):
        raise ParameterError(f"need 0 <= i < j < n, got i={i}, j={j}, n={n}")
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def pair_from_offset(offset: int, n: int) -> tuple[int, int]:
    """Inverse of :func:`pair_offset`."""
    if not (0 <= offset < n_pairs(n)):
        raise ParameterError(f"offset {offset} out of range for n={n}")
    i = 0
    row = n - 1
    while offset >= row:
        offset -= row
        i += 1
        row -= 1
    return i, i + 1 + offset


def pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays ``(rows, cols)`` of all pairs ``i < j`` in canonical order."""
    return np.triu_indices(n, k=1)


def holder_conjugate(p: float) -> float:
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    if p == 1:
        return math.inf
    return p / (p - 1.0)


def avg_norm(a, b, p: float = 1.0) -> float:
    """Normalized ell-p distance ``(mean |a - b|^p)^(1/p)`` between two
    distance vectors of the same order."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise DimensionError(f"distance vectors differ in shape: {a.shape} vs {b.shape}")
    diff = np.abs(a - b)
    if p == 1:
        return float(diff.mean())
    return float(np.mean(diff**p) ** (1.0 / p))


def pairwise_avg_cost(A: np.ndarray, B: np.ndarray, p: float = 1.0, chunk: int = 256) -> np.ndarray:
    """Matrix of ``avg_norm(A[k], B[l], p) ** p`` for all atom pairs."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise DimensionError(f"atom matrices are incompatible: {A.shape} vs {B.shape}")
    out = np.empty((A.shape[0], B.shape[0]))
    for start in range(0, A.shape[0], chunk):
        diff = np.abs(A[start:start + chunk, None, :] - B[None, :, :])
        if p != 1:
            diff = diff**p
        out[start:start + chunk] = diff.mean(axis=2)
    return out


def dual_norm(theta, p: float) -> float:
    """Dual of the pair-averaged p-norm: ``N^(1/p) * ||theta||_q``."""
    theta = np.asarray(theta, dtype=np.float64)
    q = holder_conjugate(p)
    scale = theta.size ** (1.0 / p)
    if math.isinf(q):
        return float(scale * np.max(np.abs(theta)))
    return float(scale * np.linalg.norm(theta, ord=q))


@dataclass(frozen=True)
class SlicingDirection:
    order: int
    theta: np.ndarray
    normalization: str
    p: float = 1.0


def normalize_directions(G: np.ndarray, p: float, mode: str) -> np.ndarray:
    """Scale each row of ``G`` onto the boundary of the dual unit ball
    (``mode='dual'``) or onto the Euclidean unit sphere."""
    G = np.atleast_2d(np.asarray(G, dtype=np.float64))
    if mode == "euclidean":
        norms = np.linalg.norm(G, axis=1)
    elif mode == "dual":
        q = holder_conjugate(p)
        N = G.shape[1]
        if math.isinf(q):
            norms = N * np.max(np.abs(G), axis=1)
        else:
            norms = N ** (1.0 / p) * np.linalg.norm(G, ord=q, axis=1)
    else:
        raise ParameterError(f"unknown direction mode {mode!r}; expected one of {DIRECTION_MODES}")
    if np.any(norms == 0):
        raise NumericalError("cannot normalize a zero direction")
    return G / norms[:, None]


def sample_directions(n: int, L: int, p: float, mode: str, rng: np.random.Generator) -> np.ndarray:
    """Draw ``L`` Gaussian directions in R^N_n and normalize them row-wise."""
    if n < 2:
        raise ParameterError(f"order must be >= 2, got {n}")
    if L < 1:
        raise ParameterError(f"need at least one direction, got L={L}")
    if mode not in DIRECTION_MODES:
        raise ParameterError(f"unknown direction mode {mode!r}; expected one of {DIRECTION_MODES}")
    G = rng.standard_normal((L, n_pairs(n)))
    return normalize_directions(G, p, mode)


def sample_direction(n: int, p: float, mode: str, seed) -> SlicingDirection:
    theta = sample_directions(n, 1, p, mode, make_rng(seed))[0]
    return SlicingDirection(order=n, theta=theta, normalization=mode, p=p)


def make_rng(seed, *keys: int) -> np.random.Generator:
    """Generator for the child stream ``(seed, *keys)``.

    Streams with distinct key paths are statistically independent and each is
    fully determined by its path, so work can be split across tasks without
    changing results.
    """
    if isinstance(seed, np.random.Generator):
        if keys:
            raise ParameterError("child keys need an integer seed, not a Generator")
        return seed
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *map(int, keys)])))
