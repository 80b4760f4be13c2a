"""k-nearest-neighbour affinity graph over the query features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .core import DimMismatch, FeatureMatrix, LaplacianShotError, SoftAssignment


class GraphTooSmall(LaplacianShotError):
    pass


@dataclass(frozen=True, eq=False)
class AffinityGraph:
    """Sparse affinity ``W`` stored as CSR.

    Graphs built by :func:`build_knn_graph` are binary, loop-free and have
    sorted neighbour lists. Arbitrary non-negative weights are accepted through
    :meth:`from_dense`, which is how kernel affinities are fed to the solver.
    """

    weights: sparse.csr_array
    symmetric: bool = False
    k: int = 0
    k_requested: int = 0

    def __post_init__(self):
        w = sparse.csr_array(self.weights, dtype=np.float64)
        w.sort_indices()
        if w.shape[0] != w.shape[1]:
            raise DimMismatch(f"affinity matrix must be square, got {w.shape}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_dense(cls, w, symmetric=None) -> "AffinityGraph":
        w = np.asarray(w, dtype=np.float64)
        if symmetric is None:
            symmetric = bool(np.array_equal(w, w.T))
        return cls(sparse.csr_array(w), symmetric=symmetric)

    @classmethod
    def from_neighbors(cls, neighbors, symmetric=False) -> "AffinityGraph":
        """Binary graph from explicit neighbour lists."""
        n = len(neighbors)
        rows = np.repeat(np.arange(n), [len(nb) for nb in neighbors])
        cols = np.fromiter((p for nb in neighbors for p in nb), dtype=np.int64, count=rows.size)
        w = sparse.csr_array((np.ones(rows.size), (rows, cols)), shape=(n, n))
        return cls(w, symmetric=symmetric)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def clamped(self) -> bool:
        return self.k < self.k_requested

    def neighbors(self, q: int) -> np.ndarray:
        w = self.weights
        return w.indices[w.indptr[q]:w.indptr[q + 1]]

    @property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.weights.sum(axis=1)).reshape(-1)

    def to_dense(self) -> np.ndarray:
        return self.weights.toarray()

    def propagate(self, y: np.ndarray) -> np.ndarray:
        """``W @ y``, the neighbour class mass of every node."""
        if y.shape[0] != self.n:
            raise DimMismatch(f"graph has {self.n} nodes, assignment has {y.shape[0]} rows")
        return self.weights @ y


def squared_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """All-pairs squared Euclidean distances, clipped at zero."""
    d = (x * x).sum(axis=1)[:, None] + (y * y).sum(axis=1)[None, :] - 2.0 * (x @ y.T)
    np.maximum(d, 0.0, out=d)
    return d


def knn_indices(x: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other rows of ``x``, ties broken by lower index."""
    d = squared_distances(x, x)
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")
    return order[:, :k]


def build_knn_graph(features, k: int, symmetrize: bool = False) -> AffinityGraph:
    """Binary directed kNN graph: ``w(q, p) = 1`` iff ``p`` is among the ``k``
    nearest neighbours of ``q`` under Euclidean distance.

    ``k`` is clamped to ``N - 1``; the effective value is recorded on the
    returned graph. With ``symmetrize`` the edge sets are united, i.e.
    ``W := max(W, W.T)``.
    """
    x = features.data if isinstance(features, FeatureMatrix) else np.asarray(features, float)
    n = x.shape[0]
    if n < 2:
        raise GraphTooSmall(f"need at least 2 points to build a graph, got {n}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    k_eff = min(int(k), n - 1)

    nbrs = knn_indices(x, k_eff)
    rows = np.repeat(np.arange(n), k_eff)
    w = sparse.csr_array((np.ones(n * k_eff), (rows, nbrs.reshape(-1))), shape=(n, n))
    if symmetrize:
        w = w.maximum(w.T).tocsr()
    return AffinityGraph(w, symmetric=symmetrize, k=k_eff, k_requested=int(k))


def pairwise_term(graph: AffinityGraph, y) -> float:
    """Relaxed Laplacian term ``-sum_{q,p} w(q,p) y_q . y_p``."""
    m = y.matrix if isinstance(y, SoftAssignment) else np.asarray(y, dtype=np.float64)
    return -float(np.sum(m * graph.propagate(m)))


def pairwise_bound(graph: AffinityGraph, y, y_ref) -> float:
    """First-order expansion of :func:`pairwise_term` around ``y_ref`` evaluated at ``y``.

    ``-sum y_ref.(W y_ref) - 2 sum (W y_ref).(y - y_ref)``. For symmetric PSD ``W``
    this is an upper bound on ``pairwise_term(graph, y)``, tight at ``y = y_ref``.
    """
    m = y.matrix if isinstance(y, SoftAssignment) else np.asarray(y, dtype=np.float64)
    r = y_ref.matrix if isinstance(y_ref, SoftAssignment) else np.asarray(y_ref, dtype=np.float64)
    wr = graph.propagate(r)
    return -float(np.sum(r * wr)) - 2.0 * float(np.sum(wr * (m - r)))
