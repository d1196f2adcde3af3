"""Image-level segmentation pipelines: features in, label map out.

Three paths mirror the clustering back ends. K-means clusters every pixel's
feature. Ward (and sampled single linkage) clusters a strided pixel sample
and labels the remaining pixels by their nearest cluster-mean feature. The
grid single-linkage path clusters the disjoint-patch subsample grid and
propagates labels spatially (patch fill, then nearest grid point).
"""

from __future__ import annotations

import numpy as np

from .clustering import (
    ClusterResult,
    KMeansParams,
    LinkageParams,
    agglomerative,
    eval_linf_objective,
    kmeans,
    propagate_grid_labels,
    single_linkage_threshold,
)
from .features import FeatureField, PatchParams, axis_positions, grid_features


def kmeans_segment(feats: FeatureField, params: KMeansParams):
    """Cluster every pixel's feature vector; returns (label map, result)."""
    rows, cols = feats.shape
    result = kmeans(feats.flat(), params)
    return result.labels.reshape(rows, cols), result


def _summary_result(points: np.ndarray, labels: np.ndarray, seed) -> ClusterResult:
    """ClusterResult-shaped summary for non-kmeans labelings."""
    k = int(labels.max()) + 1
    centroids = np.array([points[labels == j].mean(axis=0) for j in range(k)])
    sq = float(((points - centroids[labels]) ** 2).sum())
    return ClusterResult(
        labels=labels,
        centroids=centroids,
        objective_sq_euclid=sq,
        objective_sq_linf=eval_linf_objective(points, labels, centroids),
        iterations=0,
        restart_index=0,
        seed=seed,
    )


def sample_coords(rows: int, cols: int, stride: int) -> np.ndarray:
    """Strided pixel sample, row-major, offset to sit mid-stride."""
    r = np.arange(stride // 2, rows, stride)
    c = np.arange(stride // 2, cols, stride)
    rr, cc = np.meshgrid(r, c, indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


def sampled_agglomerative_segment(feats: FeatureField, k: int, linkage: str,
                                  stride: int = 4, min_cluster_size: int = 0,
                                  metric: str = "l2", seed: int = 0):
    """Agglomerative clustering on a strided pixel sample, then every pixel
    takes the label of its nearest cluster-mean feature.

    Returns (label map, summary ClusterResult).
    """
    rows, cols = feats.shape
    coords = sample_coords(rows, cols, stride)
    sample = feats.values[coords[:, 0], coords[:, 1]]
    params = LinkageParams(mode="cut", k=k, metric=metric,
                           min_cluster_size=min_cluster_size)
    sample_labels = agglomerative(sample, params, linkage)
    k_eff = int(sample_labels.max()) + 1
    centroids = np.array([sample[sample_labels == j].mean(axis=0) for j in range(k_eff)])
    flat = feats.flat()
    d2 = (np.einsum("ij,ij->i", flat, flat)[:, None] - 2.0 * (flat @ centroids.T)
          + np.einsum("ij,ij->i", centroids, centroids)[None, :])
    labels = d2.argmin(axis=1)
    return labels.reshape(rows, cols), _summary_result(flat, labels, seed)


def grid_single_linkage_segment(field: np.ndarray, m: int, params: LinkageParams,
                                padding: str = "reflect", with_location: bool = True,
                                seed: int = 0):
    """Single linkage on the disjoint-patch grid with spatial propagation.

    Threshold mode connects grid points below the b radius; cut mode runs the
    agglomerative merge down to k clusters. Returns (label map, summary).
    """
    rows, cols = field.shape
    pos_r = axis_positions(rows, m)
    pos_c = axis_positions(cols, m)
    rr, cc = np.meshgrid(pos_r, pos_c, indexing="ij")
    grid = np.stack([rr.ravel(), cc.ravel()], axis=1)
    patch = PatchParams(m, padding)
    feats = grid_features(field, grid, patch, with_location=with_location)
    if params.mode == "threshold":
        labels_map = single_linkage_threshold(grid, feats, params, (rows, cols), m)
    else:
        grid_labels = agglomerative(feats, params, "single")
        labels_map = propagate_grid_labels(grid, grid_labels, (rows, cols), m)
    return labels_map, _summary_result(feats, labels_map[grid[:, 0], grid[:, 1]], seed)
