"""Square Euclidean / GMM distances and the label rules built on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DISCARD, GmmParams, mahalanobis_and_logdet

EUCLIDEAN = "euclidean"
GMM = "gmm"


@dataclass(frozen=True)
class DistanceRow:
    values: np.ndarray
    metric: str = GMM

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).reshape(-1))
        if self.metric not in (EUCLIDEAN, GMM):
            raise ValueError(f"unknown metric {self.metric!r}")

    def __len__(self):
        return self.values.size


def squared_euclidean(y, mu) -> float:
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if y.shape != mu.shape:
        raise ValueError(f"dimension mismatch: {y.shape} vs {mu.shape}")
    diff = y - mu
    return float(diff @ diff)


def squared_gmm_distance(y, weight: float, mean, cov, K: int) -> float:
    """(y-mu)^T Sigma^-1 (y-mu) + ln|Sigma| - 2 ln(K pi) for one component.

    Minimizing this over k picks the component with the largest pi^k N(y; mu^k, Sigma^k).
    """
    if not weight > 0:
        raise ValueError(f"component weight must be positive, got {weight}")
    quad, logdet = mahalanobis_and_logdet(np.asarray(y, float)[None, :], np.asarray(mean, float), cov)
    return float(quad[0] + logdet - 2.0 * np.log(K * weight))


def euclidean_matrix(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(N, K) matrix of squared Euclidean distances."""
    diff = np.atleast_2d(points)[:, None, :] - np.atleast_2d(centroids)[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def gmm_distance_matrix(points: np.ndarray, params: GmmParams) -> np.ndarray:
    """(N, K) matrix of square GMM distances; zero-weight components are +inf."""
    points = np.atleast_2d(points)
    K = params.K
    out = np.empty((points.shape[0], K))
    for k in range(K):
        quad, logdet = mahalanobis_and_logdet(points, params.means[k], params.covariances[k])
        w = params.weights[k]
        out[:, k] = quad + logdet - 2.0 * np.log(K * w) if w > 0 else np.inf
    return out


def distance_row(y, params: GmmParams, metric: str = GMM) -> DistanceRow:
    y = np.asarray(y, dtype=float)
    if metric == EUCLIDEAN:
        values = euclidean_matrix(y[None, :], params.means)[0]
    elif metric == GMM:
        if np.any(params.weights <= 0):
            raise ValueError("component weights must be positive")
        values = gmm_distance_matrix(y[None, :], params)[0]
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return DistanceRow(values, metric)


def _values(row) -> np.ndarray:
    return row.values if isinstance(row, DistanceRow) else np.asarray(row, dtype=float)


def delta_neighbor_set(row, delta: float) -> set[int]:
    """Indices whose distance is within ``delta`` of the row minimum (closed)."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    v = _values(row)
    return {int(k) for k in np.flatnonzero(v - v.min() <= delta)}


def deterministic_label(row, delta: float) -> int:
    """Label k if it beats every other component by more than 2*delta, else DISCARD."""
    v = _values(row)
    k = int(np.argmin(v))
    others = np.delete(v, k)
    if others.size == 0 or np.all(v[k] < others - 2.0 * delta):
        return k
    return DISCARD


def deterministic_labels(dist: np.ndarray, delta: float) -> np.ndarray:
    """Row-wise :func:`deterministic_label` over an (N, K) distance matrix."""
    dist = np.asarray(dist, dtype=float)
    if dist.shape[1] == 1:
        return np.zeros(dist.shape[0], dtype=int)
    order = np.argsort(dist, axis=1, kind="stable")
    rows = np.arange(dist.shape[0])
    best = dist[rows, order[:, 0]]
    second = dist[rows, order[:, 1]]
    return np.where(best < second - 2.0 * delta, order[:, 0], DISCARD)


def sample_neighbor_labels(dist: np.ndarray, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Draw one label per row uniformly from its delta-neighbor set."""
    dist = np.asarray(dist, dtype=float)
    mask = dist - dist.min(axis=1, keepdims=True) <= delta
    counts = mask.sum(axis=1)
    u = rng.random(dist.shape[0])
    pick = np.minimum((u * counts).astype(int), counts - 1)
    # position of the pick-th True entry in each row
    ranks = np.cumsum(mask, axis=1) - 1
    hit = mask & (ranks == pick[:, None])
    return np.argmax(hit, axis=1)
