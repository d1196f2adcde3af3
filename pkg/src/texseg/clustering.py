"""Clustering back ends over feature vectors: size-constrained k-means,
threshold single-linkage on the disjoint-patch grid, and agglomerative
single/ward linkage cut to k clusters.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster
from scipy.cluster.hierarchy import linkage as scipy_linkage
from scipy.spatial.distance import cdist


@dataclass(frozen=True)
class KMeansParams:
    k: int
    restarts: int = 10
    max_iters: int = 100
    min_cluster_size: int = 0
    seed: int = 0
    tol: float = 1e-12

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.tol <= 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.restarts < 1 or self.max_iters < 1:
            raise ValueError("restarts and max_iters must be >= 1")


@dataclass
class ClusterResult:
    """Labels plus the centroid template and both objective readings.

    objective_sq_euclid is what Lloyd optimizes; objective_sq_linf is the
    sum of squared max-norm distances to the assigned centroid, reported for
    the same solution. objective_history holds the per-iteration Euclidean
    objective of the winning restart.
    """

    labels: np.ndarray
    centroids: np.ndarray
    objective_sq_euclid: float
    objective_sq_linf: float
    iterations: int
    restart_index: int
    seed: int
    objective_history: list = field(default_factory=list)


def _sq_distances(points: np.ndarray, centroids: np.ndarray,
                  p_norms: np.ndarray | None = None) -> np.ndarray:
    if p_norms is None:
        p_norms = np.einsum("ij,ij->i", points, points)
    d2 = (
        p_norms[:, None]
        - 2.0 * (points @ centroids.T)
        + np.einsum("ij,ij->i", centroids, centroids)[None, :]
    )
    return np.maximum(d2, 0.0)


def _cluster_means(points: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    onehot = np.zeros((len(points), k))
    onehot[np.arange(len(points)), labels] = 1.0
    return (onehot.T @ points) / onehot.sum(axis=0)[:, None]


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator,
                   p_norms: np.ndarray) -> np.ndarray:
    n = len(points)
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = _sq_distances(points, centroids[:1], p_norms).ravel()
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, _sq_distances(points, centroids[j:j + 1], p_norms).ravel())
    return centroids


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iters: int, tol: float,
           p_norms: np.ndarray):
    n, k = len(points), len(centroids)
    labels = np.full(n, -1, dtype=np.int64)
    history = []
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        d2 = _sq_distances(points, centroids, p_norms)
        new_labels = d2.argmin(axis=1)
        # re-seed empty clusters at the point farthest from its centroid
        for j in range(k):
            if not np.any(new_labels == j):
                far = d2[np.arange(n), new_labels].argmax()
                new_labels[far] = j
                centroids[j] = points[far]
        history.append(float(d2[np.arange(n), new_labels].sum()))
        moved = _cluster_means(points, new_labels, k)
        shift = float(((moved - centroids) ** 2).sum(axis=1).max())
        converged = np.array_equal(new_labels, labels) or shift <= tol
        labels, centroids = new_labels, moved
        if converged:
            break
    return labels, centroids, iterations, history


def _repair_min_sizes(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray,
                      k: int, min_size: int, p_norms: np.ndarray):
    """Move cheapest points from above-floor clusters into below-floor ones.

    Skipped when infeasible (k * min_size > point count).
    """
    n = len(points)
    if min_size <= 0 or k * min_size > n:
        return labels, centroids
    labels = labels.copy()
    while True:
        sizes = np.bincount(labels, minlength=k)
        under = np.flatnonzero(sizes < min_size)
        if under.size == 0:
            break
        target = int(under[sizes[under].argmin()])
        donors = np.flatnonzero(sizes > min_size)
        movable = np.isin(labels, donors) & (labels != target)
        cost = _sq_distances(points, centroids[target:target + 1], p_norms).ravel()
        cost[~movable] = np.inf
        labels[int(cost.argmin())] = target
    return labels, _cluster_means(points, labels, k)


def eval_linf_objective(points, labels, centroids) -> float:
    """Sum over points of the squared max-norm distance to the assigned centroid."""
    points = np.asarray(points, dtype=np.float64)
    diffs = np.abs(points - np.asarray(centroids)[np.asarray(labels)])
    return float((diffs.max(axis=1) ** 2).sum())


def kmeans(points, params: KMeansParams) -> ClusterResult:
    """Lloyd iterations with k-means++ seeding, best of params.restarts
    restarts by the squared-Euclidean objective.

    When every distinct k-point seeding fits in the restart budget the
    seedings are enumerated instead of sampled, so tiny instances get
    complete coverage of point-seeded starts.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"points must be (n, dim), got shape {points.shape}")
    if len(points) < params.k:
        raise ValueError(f"need at least k={params.k} points, got {len(points)}")
    rng = np.random.default_rng(params.seed)
    p_norms = np.einsum("ij,ij->i", points, points)
    seed_pool = ()
    if math.comb(len(points), params.k) <= params.restarts:
        seed_pool = tuple(itertools.combinations(range(len(points)), params.k))
    best = None
    for restart in range(params.restarts):
        if restart < len(seed_pool):
            init = points[list(seed_pool[restart])].copy()
        else:
            init = _kmeanspp_init(points, params.k, rng, p_norms)
        labels, centroids, iters, history = _lloyd(points, init, params.max_iters,
                                                   params.tol, p_norms)
        labels, centroids = _repair_min_sizes(points, labels, centroids,
                                              params.k, params.min_cluster_size, p_norms)
        obj = float(_sq_distances(points, centroids, p_norms)[np.arange(len(points)),
                                                              labels].sum())
        if best is None or obj < best[0]:
            best = (obj, labels, centroids, iters, restart, history)
    obj, labels, centroids, iters, restart, history = best
    return ClusterResult(
        labels=labels,
        centroids=centroids,
        objective_sq_euclid=obj,
        objective_sq_linf=eval_linf_objective(points, labels, centroids),
        iterations=iters,
        restart_index=restart,
        seed=params.seed,
        objective_history=history,
    )


# ---------------------------------------------------------------------------
# Membership matrices
# ---------------------------------------------------------------------------

def labels_to_membership(labels, k: int) -> np.ndarray:
    """One-hot (n, k) membership matrix for a label vector."""
    labels = np.asarray(labels).ravel()
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in 0..{k - 1}")
    matrix = np.zeros((len(labels), k), dtype=np.int64)
    matrix[np.arange(len(labels)), labels] = 1
    return matrix


def membership_to_labels(matrix) -> np.ndarray:
    matrix = np.asarray(matrix)
    if not np.array_equal(matrix.sum(axis=1), np.ones(len(matrix), dtype=matrix.dtype)):
        raise ValueError("membership matrix rows must be one-hot")
    return matrix.argmax(axis=1)


# ---------------------------------------------------------------------------
# Linkage clustering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinkageParams:
    """mode "threshold" connects pairs closer than b; mode "cut" stops the
    agglomerative merge at k clusters."""

    mode: str
    b: float | None = None
    k: int | None = None
    metric: str = "linf"
    min_cluster_size: int = 0

    def __post_init__(self):
        if self.mode not in ("threshold", "cut"):
            raise ValueError(f"mode must be 'threshold' or 'cut', got {self.mode!r}")
        if self.mode == "threshold" and (self.b is None or self.b <= 0):
            raise ValueError("threshold mode requires b > 0")
        if self.mode == "cut" and (self.k is None or self.k < 1):
            raise ValueError("cut mode requires k >= 1")
        if self.metric not in ("linf", "l2"):
            raise ValueError(f"metric must be 'linf' or 'l2', got {self.metric!r}")


def theoretical_threshold(n: int, beta: float = 1.5) -> float:
    """Connection radius (log n)^(beta/2) / sqrt(n) from the consistency theory."""
    return math.log(n) ** (beta / 2) / math.sqrt(n)


def _metric_name(metric: str) -> str:
    return "chebyshev" if metric == "linf" else "euclidean"


def _find(parent: np.ndarray, a: int) -> int:
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


def _canonical_labels(raw: np.ndarray) -> np.ndarray:
    """Relabel clusters 0..C-1 in order of smallest member index."""
    _, first = np.unique(raw, return_index=True)
    order = np.argsort(first)
    remap = np.empty(order.size, dtype=np.int64)
    remap[order] = np.arange(order.size)
    compact = np.searchsorted(np.unique(raw), raw)
    return remap[compact]


def propagate_grid_labels(grid: np.ndarray, grid_labels: np.ndarray,
                          image_shape, m: int) -> np.ndarray:
    """Spread grid-point labels to the whole image: each grid point labels its
    own patch, every remaining pixel takes the label of the Euclidean-nearest
    grid point (ties: smallest row, then column)."""
    rows, cols = image_shape
    out = np.full((rows, cols), -1, dtype=np.int64)
    for (r, c), lab in zip(grid, grid_labels):
        out[max(0, r - m):r + m + 1, max(0, c - m):c + m + 1] = lab
    rr, cc = np.nonzero(out < 0)
    if rr.size:
        d2 = (rr[:, None] - grid[:, 0]) ** 2 + (cc[:, None] - grid[:, 1]) ** 2
        out[rr, cc] = grid_labels[d2.argmin(axis=1)]
    return out


def single_linkage_threshold(grid_points: np.ndarray, features: np.ndarray,
                             params: LinkageParams, image_shape, m: int) -> np.ndarray:
    """Threshold single-linkage segmentation on the disjoint-patch grid.

    Connects grid points whose feature distance is below params.b, takes
    connected components as clusters, then propagates labels to every pixel.
    Returns a full-image label map; output does not depend on the input
    point order.
    """
    grid_points = np.asarray(grid_points)
    features = np.asarray(features, dtype=np.float64)
    if len(grid_points) == 0:
        raise ValueError("empty subsample grid")
    if len(features) != len(grid_points):
        raise ValueError("features must align with grid points")
    if params.mode != "threshold":
        raise ValueError("single_linkage_threshold requires threshold mode")
    order = np.lexsort((grid_points[:, 1], grid_points[:, 0]))
    grid_points = grid_points[order]
    features = features[order]
    dists = cdist(features, features, _metric_name(params.metric))
    n = len(grid_points)
    parent = np.arange(n)
    for u in range(n):
        for v in range(u + 1, n):
            if dists[u, v] < params.b:
                parent[_find(parent, v)] = _find(parent, u)
    roots = np.array([_find(parent, i) for i in range(n)])
    grid_labels = _canonical_labels(roots)
    return propagate_grid_labels(grid_points, grid_labels, image_shape, m)


def _merge_undersized(points: np.ndarray, labels: np.ndarray, min_size: int,
                      metric: str) -> np.ndarray:
    """Merge every under-floor cluster into the cluster of its nearest point."""
    labels = labels.copy()
    while True:
        ids, sizes = np.unique(labels, return_counts=True)
        if ids.size <= 1:
            break
        bad = ids[sizes < min_size]
        if bad.size == 0:
            break
        # smallest undersized cluster first; ties by id
        bad_sizes = sizes[np.isin(ids, bad)]
        target = int(bad[bad_sizes.argmin()])
        inside = labels == target
        d = cdist(points[inside], points[~inside], _metric_name(metric))
        nearest_outside = np.flatnonzero(~inside)[d.min(axis=0).argmin()]
        labels[inside] = labels[nearest_outside]
    return labels


def agglomerative(points, params: LinkageParams, linkage: str) -> np.ndarray:
    """Agglomerative clustering (single or ward) cut at params.k clusters.

    Clusters below min_cluster_size are merged into the cluster of their
    nearest point; when that drops the cluster count below k the dendrogram
    is re-cut one level deeper until k floors-respecting clusters remain.
    """
    points = np.asarray(points, dtype=np.float64)
    if linkage not in ("single", "ward"):
        raise ValueError(f"linkage must be 'single' or 'ward', got {linkage!r}")
    if params.mode != "cut":
        raise ValueError("agglomerative requires cut mode")
    k = params.k
    n = len(points)
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    metric = "euclidean" if linkage == "ward" else _metric_name(params.metric)
    tree = scipy_linkage(points, method=linkage, metric=metric)
    min_size = params.min_cluster_size
    feasible = min_size > 0 and k * min_size <= n
    best = None
    for k_cut in range(k, n + 1):
        raw = fcluster(tree, t=k_cut, criterion="maxclust")
        labels = _merge_undersized(points, raw, min_size, params.metric) if feasible else raw
        count = np.unique(labels).size
        if count == k:
            return _canonical_labels(labels)
        if best is None or abs(count - k) < abs(best[0] - k):
            best = (count, labels)
        if not feasible:
            break
    return _canonical_labels(best[1])
