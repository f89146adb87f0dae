"""Maximum mean discrepancy with an RBF kernel."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist, pdist

from dlf_distill.core.errors import DimensionMismatchError, EmptyDataError


def _check(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise EmptyDataError("both sample sets must be non-empty")
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatchError(f"sample dims {x.shape[1]} and {y.shape[1]} differ")
    return x, y


def rbf_kernel(a: np.ndarray, b: np.ndarray, bandwidth: float) -> np.ndarray:
    """``exp(-|a - b|^2 / (2 bandwidth^2))`` for every row pair."""
    return np.exp(-0.5 * cdist(a, b, "sqeuclidean") / bandwidth**2)


def median_bandwidth(x: np.ndarray, y: np.ndarray) -> float:
    """Median pairwise distance over the pooled samples; 1.0 if degenerate."""
    x, y = _check(x, y)
    distances = pdist(np.vstack([x, y]))
    if distances.size == 0:
        return 1.0
    median = float(np.median(distances))
    return median if median > 0.0 else 1.0


def _mmd_squared(
    x: np.ndarray, y: np.ndarray, bandwidth: float
) -> tuple[float, np.ndarray, np.ndarray]:
    k_xx = rbf_kernel(x, x, bandwidth)
    k_xy = rbf_kernel(x, y, bandwidth)
    k_yy = rbf_kernel(y, y, bandwidth)
    value = float(k_xx.mean() + k_yy.mean() - 2.0 * k_xy.mean())
    return value, k_xx, k_xy


def mmd(x: np.ndarray, y: np.ndarray, bandwidth: float) -> float:
    """Biased V-statistic MMD, returned as ``sqrt(max(MMD^2, 0))``."""
    x, y = _check(x, y)
    value, _, _ = _mmd_squared(x, y, bandwidth)
    return float(np.sqrt(max(value, 0.0)))


def mmd_with_grad(x: np.ndarray, y: np.ndarray, bandwidth: float) -> tuple[float, np.ndarray]:
    """MMD and its gradient with respect to the rows of ``x``.

    The bandwidth is treated as a constant. The gradient is zero where the
    MMD itself is zero.
    """
    x, y = _check(x, y)
    n, m = x.shape[0], y.shape[0]
    value, k_xx, k_xy = _mmd_squared(x, y, bandwidth)
    dist = float(np.sqrt(max(value, 0.0)))
    if dist == 0.0:
        return 0.0, np.zeros_like(x)
    pull_xx = x * k_xx.sum(axis=1, keepdims=True) - k_xx @ x
    pull_xy = x * k_xy.sum(axis=1, keepdims=True) - k_xy @ y
    grad_sq = (-2.0 / (n * n) * pull_xx + 2.0 / (n * m) * pull_xy) / bandwidth**2
    return dist, grad_sq / (2.0 * dist)
