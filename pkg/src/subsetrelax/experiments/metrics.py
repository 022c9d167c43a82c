"""Neighborhood-preservation metrics for embeddings."""

from __future__ import annotations

import numpy as np

from ..errors import SubsetRelaxError


def _sq_dists(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
    return np.maximum(d, 0.0)


def _neighbor_order(x: np.ndarray) -> np.ndarray:
    """Row i lists the other points by increasing distance, ties to lower index."""
    d = _sq_dists(x)
    np.fill_diagonal(d, -1.0)  # self sorts first and is dropped
    return np.argsort(d, axis=1, kind="stable")[:, 1:]


def trustworthiness(high, low, k: int) -> float:
    """Trustworthiness T(k) of a low-dimensional embedding.

    Penalizes each low-space k-nearest neighbor ``j`` of point ``i`` by how
    far its high-space rank ``r(i, j)`` exceeds ``k``::

        T(k) = 1 - 2 / (n k (2n - 3k - 1)) * sum_i sum_j max(r(i, j) - k, 0)

    Ranks start at 1 for the nearest point; self is excluded and distance
    ties go to the lower index.
    """
    high = np.asarray(high, dtype=np.float64)
    low = np.asarray(low, dtype=np.float64)
    n = high.shape[0]
    if low.shape[0] != n:
        raise SubsetRelaxError("high and low must have the same number of points")
    if k < 1 or 2 * n - 3 * k - 1 <= 0 or k >= n:
        raise SubsetRelaxError(f"n={n} points is too few for k={k}")
    high_order = _neighbor_order(high)
    ranks = np.empty((n, n), dtype=np.int64)
    rows = np.arange(n)[:, None]
    ranks[rows, high_order] = np.arange(1, n)[None, :]
    low_nn = _neighbor_order(low)[:, :k]
    penalty = np.maximum(ranks[rows, low_nn] - k, 0).sum()
    return float(1.0 - 2.0 / (n * k * (2 * n - 3 * k - 1)) * penalty)


def one_nn_error(x, labels) -> float:
    """Leave-one-out 1-nearest-neighbor classification error."""
    labels = np.asarray(labels)
    nn = _neighbor_order(np.asarray(x, dtype=np.float64))[:, 0]
    return float(np.mean(labels[nn] != labels))
