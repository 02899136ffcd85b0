"""
Reference reconstructions.

``Oracle`` sees the latent field itself at the sensors and interpolates it
by noise-free GP regression.  ``knn_baseline`` only sees the one-bit
decisions and takes a plurality vote among the nearest sensors, with ``k``
picked by cross-validation.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg
from scipy.spatial import cKDTree

from ..stochastic import CovKernel, chol_with_jitter, cross_gram, gram

__all__ = ["OracleRegressor", "knn_predict", "knn_select_k", "knn_baseline"]


class OracleRegressor:
    """GP conditional mean at fixed query points given ``g`` at sensors.

    The weight matrix ``C(x*, X) C(X, X)^{-1}`` is built once.
    """

    def __init__(self, sensor_locations, query_points, kernel: CovKernel,
                 mean: float, c: float):
        X = np.atleast_2d(np.asarray(sensor_locations, dtype=float))
        L, _ = chol_with_jitter(gram(kernel, X))
        Cq = cross_gram(kernel, query_points, X)
        self.weights = linalg.cho_solve((L, True), Cq.T,
                                        check_finite=False).T
        self.mean = float(mean)
        self.c = float(c)

    def predict_latent(self, g_sensors) -> np.ndarray:
        return self.mean + self.weights @ (np.asarray(g_sensors) - self.mean)

    def predict(self, g_sensors) -> np.ndarray:
        return (self.predict_latent(g_sensors) >= self.c).astype(np.int8)


def knn_predict(train_x, train_y, query, k: int) -> np.ndarray:
    """Plurality vote of the ``k`` nearest training points; ties give 1."""
    train_x = np.atleast_2d(np.asarray(train_x, dtype=float))
    train_y = np.asarray(train_y).astype(float)
    if k < 1 or k > len(train_x):
        raise ValueError(f"k={k} needs between 1 and {len(train_x)} neighbours")
    _, idx = cKDTree(train_x).query(np.atleast_2d(query), k=k)
    idx = np.asarray(idx).reshape(len(np.atleast_2d(query)), k)
    votes = train_y[idx].sum(axis=1)
    return (2 * votes >= k).astype(np.int8)


def knn_select_k(x, y, k_grid, folds: int = 5, rng=None) -> int:
    """Cross-validated ``k`` (highest accuracy, smallest ``k`` on ties)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y)
    n = len(x)
    k_grid = sorted(int(k) for k in k_grid)
    if not k_grid:
        raise ValueError("k grid is empty")
    if k_grid[0] > n:
        raise ValueError(f"fewer sensors ({n}) than the smallest k")
    folds = max(2, min(folds, n))
    if n < 2:
        return k_grid[0]
    order = rng.permutation(n) if rng is not None else np.arange(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[order] = np.arange(n) % folds
    best_k, best_acc = k_grid[0], -1.0
    for k in k_grid:
        hits, count = 0, 0
        for f in range(folds):
            test = fold_of == f
            train = ~test
            if k > train.sum() or not test.any():
                hits = -1
                break
            pred = knn_predict(x[train], y[train], x[test], k)
            hits += int(np.sum(pred == y[test]))
            count += int(test.sum())
        if hits < 0:
            continue
        acc = hits / count
        if acc > best_acc:
            best_k, best_acc = k, acc
    return best_k


def knn_baseline(decisions, sensor_locations, query_points, k_grid,
                 folds: int = 5, rng=None):
    """Predicted labels at ``query_points`` and the chosen ``k``."""
    k = knn_select_k(sensor_locations, decisions, k_grid, folds, rng)
    return knn_predict(sensor_locations, decisions, query_points, k), k
