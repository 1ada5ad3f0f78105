"""Graph Laplacian regularizers built from cell-cell distances.

Three constructions share one container type:

* a single-scale heat-kernel graph on the union k-NN edge set,
* a multiscale Laplacian summed over a distance-cutoff filtration,
* a multiscale Laplacian summed over nested k-NN neighbor levels.

Every construction yields ``L = D - A`` with a nonnegative symmetric
adjacency, zero diagonal, zero row sums and a positive semidefinite
Laplacian.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .data import ExpressionMatrix


@dataclass
class GraphRegularizer:
    """Adjacency/degree split of a graph Laplacian.

    ``adjacency`` is the (possibly multiscale-weighted) symmetric edge
    weight matrix, ``degrees`` its row sums. The Laplacian is
    ``diag(degrees) - adjacency``; the split is kept because the
    multiplicative updates consume the two parts separately.
    """

    adjacency: np.ndarray
    degrees: np.ndarray

    @classmethod
    def from_adjacency(cls, adjacency: np.ndarray) -> "GraphRegularizer":
        a = np.asarray(adjacency, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be square")
        if np.any(a < 0):
            raise ValueError("adjacency has negative entries")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency diagonal must be zero")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        return cls(adjacency=a, degrees=a.sum(axis=1))

    @property
    def size(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degree_matrix(self) -> np.ndarray:
        return np.diag(self.degrees)

    @property
    def laplacian(self) -> np.ndarray:
        lap = -self.adjacency.copy()
        np.fill_diagonal(lap, self.degrees)
        return lap

    def quadratic_form(self, h: np.ndarray) -> float:
        """Tr(h L h^T) for a factor matrix h with one column per node."""
        h = np.asarray(h, dtype=np.float64)
        return float(np.sum(h * h * self.degrees) - np.sum((h @ self.adjacency) * h))

    def validate(self, eig_tol: float = 1e-10) -> None:
        """Check symmetry, zero row sums and positive semidefiniteness."""
        lap = self.laplacian
        if not np.allclose(lap, lap.T, atol=0, rtol=0):
            raise ValueError("Laplacian is not symmetric")
        row = np.abs(lap.sum(axis=1)).max()
        if row > 1e-10:
            raise ValueError(f"Laplacian row sums deviate from 0 by {row}")
        lam = np.linalg.eigvalsh(lap)[0]
        if lam < -eig_tol:
            raise ValueError(f"Laplacian has negative eigenvalue {lam}")


def _as_weights(zeta) -> np.ndarray:
    w = np.asarray(zeta, dtype=np.float64).ravel()
    if w.size < 1:
        raise ValueError("filtration weights must have at least one entry")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("filtration weights must be finite and nonnegative")
    if not np.any(w > 0):
        raise ValueError("at least one filtration weight must be positive")
    return w


def pairwise_distances(x) -> np.ndarray:
    """Euclidean distances between all cell (column) pairs.

    Accepts an :class:`ExpressionMatrix` or a plain genes-by-cells array;
    returns a symmetric matrix with zero diagonal.
    """
    values = x.values if isinstance(x, ExpressionMatrix) else np.asarray(x, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] < 2:
        raise ValueError("need a 2-d matrix with at least 2 columns")
    return cdist(values.T, values.T, metric="euclidean")


def _check_distances(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 2:
        raise ValueError("distance matrix must be square with at least 2 points")
    if np.any(np.diag(d) != 0) or np.any(d < 0) or not np.array_equal(d, d.T):
        raise ValueError("distance matrix must be symmetric, nonnegative, zero-diagonal")
    return d


def _neighbor_ranks(d: np.ndarray) -> np.ndarray:
    """Per point, all other points ordered by distance, ties by smaller index."""
    m = d.shape[0]
    order = np.argsort(d, axis=1, kind="stable")
    ranks = np.empty((m, m - 1), dtype=np.intp)
    for i in range(m):
        row = order[i]
        ranks[i] = row[row != i]
    return ranks


def heat_kernel_knn_graph(d: np.ndarray, k: int, sigma: float) -> GraphRegularizer:
    """Single-scale heat-kernel graph on the union k-NN edge set.

    An edge (i, j) is present when j is among the k nearest neighbors of
    i or vice versa; its weight is exp(-d_ij^2 / sigma).
    """
    d = _check_distances(d)
    m = d.shape[0]
    if not 1 <= k <= m - 1:
        raise ValueError(f"k must be in [1, {m - 1}], got {k}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    ranks = _neighbor_ranks(d)
    mask = np.zeros((m, m), dtype=bool)
    mask[np.repeat(np.arange(m), k), ranks[:, :k].ravel()] = True
    mask |= mask.T
    adjacency = np.where(mask, np.exp(-(d**2) / sigma), 0.0)
    return GraphRegularizer.from_adjacency(adjacency)


def mean_knn_squared_distance(d: np.ndarray, k: int) -> float:
    """Mean squared distance over the union k-NN edge set (heat-kernel scale)."""
    d = _check_distances(d)
    m = d.shape[0]
    ranks = _neighbor_ranks(d)
    mask = np.zeros((m, m), dtype=bool)
    mask[np.repeat(np.arange(m), k), ranks[:, :k].ravel()] = True
    mask |= mask.T
    iu = np.triu_indices(m, k=1)
    edges = mask[iu]
    if not edges.any():
        raise ValueError("empty edge set")
    return float(np.mean(d[iu][edges] ** 2))


def cutoff_filtration_levels(d: np.ndarray, num_levels: int) -> list[np.ndarray]:
    """Binary adjacency of each distance-cutoff filtration step.

    Step t of T uses radius d_min + (t/T)(d_max - d_min) over the
    off-diagonal distances; an edge is present when 0 < d_ij <= radius.
    The edge sets are nested and step T is the complete graph.
    """
    d = _check_distances(d)
    m = d.shape[0]
    if num_levels < 1:
        raise ValueError("need at least one filtration level")
    off = d[~np.eye(m, dtype=bool)]
    dmin, dmax = off.min(), off.max()
    if dmax == dmin:
        warnings.warn(
            "all pairwise distances are equal; filtration collapses to a "
            "single complete graph",
            stacklevel=2,
        )
    radii = dmin + (np.arange(1, num_levels + 1) / num_levels) * (dmax - dmin)
    return [((d > 0) & (d <= r)).astype(np.float64) for r in radii]


def cutoff_persistent_laplacian(
    d: np.ndarray, zeta, levels: list[np.ndarray] | None = None
) -> GraphRegularizer:
    """Weighted sum of distance-cutoff filtration Laplacians.

    ``zeta`` weights the T filtration steps; precomputed ``levels`` (from
    :func:`cutoff_filtration_levels`) may be passed to amortize a weight
    sweep over the same distance matrix.
    """
    w = _as_weights(zeta)
    if levels is None:
        levels = cutoff_filtration_levels(d, len(w))
    if len(levels) != w.size:
        raise ValueError(f"{w.size} weights for {len(levels)} levels")
    adjacency = np.zeros_like(levels[0])
    for wt, level in zip(w, levels):
        if wt != 0:
            adjacency += wt * level
    return GraphRegularizer.from_adjacency(adjacency)


def knn_filtration_levels(d: np.ndarray, num_levels: int) -> list[np.ndarray]:
    """Symmetrized binary adjacency of each neighbor-count level.

    Level t connects i and j when j is among the t nearest neighbors of i
    (self excluded, distance ties broken by smaller index) or vice versa.
    The directed t-NN matrix a is symmetrized as a + a^T - a∘a^T, the
    logical OR for binary matrices, which counts mutual edges once.
    """
    d = _check_distances(d)
    m = d.shape[0]
    if not 1 <= num_levels <= m - 1:
        raise ValueError(f"number of levels must be in [1, {m - 1}], got {num_levels}")
    ranks = _neighbor_ranks(d)
    directed = np.zeros((m, m), dtype=np.float64)
    rows = np.arange(m)
    levels = []
    for t in range(num_levels):
        directed[rows, ranks[:, t]] = 1.0
        levels.append(directed + directed.T - directed * directed.T)
    return levels


def knn_persistent_laplacian(
    d: np.ndarray, zeta, levels: list[np.ndarray] | None = None
) -> GraphRegularizer:
    """Weighted sum of symmetrized k-NN level Laplacians.

    Each neighbor level is symmetrized while still binary and the weighted
    sum is taken afterwards, so the adjacency stays nonnegative and the
    result scales linearly in ``zeta``.
    """
    w = _as_weights(zeta)
    if levels is None:
        levels = knn_filtration_levels(d, len(w))
    if len(levels) != w.size:
        raise ValueError(f"{w.size} weights for {len(levels)} levels")
    adjacency = np.zeros_like(levels[0])
    for wt, level in zip(w, levels):
        if wt != 0:
            adjacency += wt * level
    return GraphRegularizer.from_adjacency(adjacency)


def _write_coo(matrix: np.ndarray, path) -> None:
    rows, cols = np.nonzero(matrix)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{matrix.shape[0]} {matrix.shape[1]} {rows.size}\n")
        for i, j in zip(rows, cols):
            fh.write(f"{i} {j} {repr(float(matrix[i, j]))}\n")


def dump_regularizer(reg: GraphRegularizer, out_dir, prefix: str = "") -> list[str]:
    """Debug dump of adjacency / degree / Laplacian parts as coo-triplets."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, matrix in (
        ("adjacency", reg.adjacency),
        ("degree", reg.degree_matrix),
        ("laplacian", reg.laplacian),
    ):
        path = out / f"{prefix}{name}.coo"
        _write_coo(matrix, path)
        written.append(str(path))
    return written
