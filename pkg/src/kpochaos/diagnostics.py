"""Point-set and grid measures used to judge SOS / MPMP dimensionality."""
from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree


def occupied_cells(points, n: int, window=(-2.5, 2.5)) -> int:
    """Number of distinct cells of an ``n x n`` grid over ``window**2`` holding a point.

    Points outside the window are ignored.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    lo, hi = window
    inside = np.all((pts >= lo) & (pts < hi), axis=1)
    idx = np.floor((pts[inside] - lo) / ((hi - lo) / n)).astype(np.int64)
    idx = np.clip(idx, 0, n - 1)
    return len(np.unique(idx[:, 0] * n + idx[:, 1]))


def box_count_ratio(points, fine: int = 100, coarse: int = 50, window=(-2.5, 2.5)) -> float:
    """Occupied fine cells over occupied coarse cells (~2 for curves, ~4 for areas)."""
    c = occupied_cells(points, coarse, window)
    if c == 0:
        return float("nan")
    return occupied_cells(points, fine, window) / c


def single_linkage_labels(points, radius: float) -> np.ndarray:
    """Cluster labels where points closer than ``radius`` are chained together."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return np.empty(0, dtype=np.int64)
    pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
                       shape=(len(pts), len(pts)))
    _, labels = connected_components(graph, directed=False)
    return labels


def count_clusters(points, radius: float) -> int:
    labels = single_linkage_labels(points, radius)
    return int(labels.max() + 1) if labels.size else 0


def cluster_centers(points, radius: float) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    labels = single_linkage_labels(pts, radius)
    return np.array([pts[labels == k].mean(axis=0) for k in range(labels.max() + 1)]) \
        if labels.size else np.empty((0, 2))


def top_mass_cells(grid, fraction: float = 0.05) -> np.ndarray:
    """Coordinates of the highest cells that together hold ``fraction`` of the grid total."""
    v = grid.values.ravel()
    order = np.argsort(v, kind="stable")[::-1]
    cum = np.cumsum(v[order])
    k = int(np.searchsorted(cum, fraction * cum[-1])) + 1
    X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
    sel = order[:k]
    return np.column_stack([X.ravel()[sel], Y.ravel()[sel]])


def nearest_distances(query, points) -> np.ndarray:
    return cKDTree(np.asarray(points, dtype=float)).query(np.asarray(query, dtype=float))[0]
