"""Lloyd's k-means and its randomized delta variant."""

from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

from .core import Dataset, GmmParams, HardAssignment, gmm_log_likelihood, rng_streams
from .distances import euclidean_matrix, sample_neighbor_labels


class KMeansResult(NamedTuple):
    centroids: np.ndarray
    assignment: HardAssignment
    wcss_trace: list
    iterations: int
    converged: bool
    label_history: list
    reseeds: int

    def to_dict(self) -> dict:
        return {
            "centroids": self.centroids.tolist(),
            "labels": self.assignment.labels.tolist(),
            "wcss_trace": [float(v) for v in self.wcss_trace],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "reseeds": int(self.reseeds),
        }


def kmeans_assign(data, centroids) -> HardAssignment:
    """Nearest-centroid labels; ties go to the lowest index."""
    points = data.points if isinstance(data, Dataset) else np.atleast_2d(data)
    centroids = np.atleast_2d(centroids)
    return HardAssignment(np.argmin(euclidean_matrix(points, centroids), axis=1), len(centroids))


def _update(points, labels, K, reseed_rng):
    N, d = points.shape
    centroids = np.zeros((K, d))
    reseeded = 0
    for k in range(K):
        members = points[labels == k]
        if len(members):
            centroids[k] = members.mean(axis=0)
        else:
            centroids[k] = points[reseed_rng.integers(N)]
            reseeded += 1
    return centroids, reseeded


def kmeans_update(data, assign, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Cluster means; an empty cluster is moved to a random data point."""
    points = data.points if isinstance(data, Dataset) else np.atleast_2d(data)
    labels = assign.labels if isinstance(assign, HardAssignment) else np.asarray(assign)
    K = assign.K if isinstance(assign, HardAssignment) else int(labels.max()) + 1
    rng = rng if rng is not None else np.random.default_rng(0)
    return _update(points, labels, K, rng)[0]


def wcss(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    diff = points - centroids[labels]
    return float(np.sum(diff * diff))


def kmeans_log_likelihood(data: Dataset, centroids: np.ndarray) -> float:
    """Log-likelihood under equal weights and identity covariances."""
    K, d = np.atleast_2d(centroids).shape
    params = GmmParams(np.full(K, 1.0 / K), centroids, np.broadcast_to(np.eye(d), (K, d, d)).copy())
    return gmm_log_likelihood(data, params)


def _lloyd(data, init, max_iters, tol, seed, assign_fn, noise_fn):
    points = data.points
    centroids = np.array(np.atleast_2d(init), dtype=float)
    K = centroids.shape[0]
    rng, reseed_rng = rng_streams(seed)
    labels = assign_fn(points, centroids, rng)
    history = [labels]
    trace = []
    converged = False
    reseeds = 0
    it = 0
    for it in range(1, max_iters + 1):
        new_centroids, n = _update(points, labels, K, reseed_rng)
        reseeds += n
        new_centroids = noise_fn(new_centroids, rng)
        shift = float(np.max(np.abs(new_centroids - centroids)))
        centroids = new_centroids
        new_labels = assign_fn(points, centroids, rng)
        trace.append(wcss(points, centroids, new_labels))
        history.append(new_labels)
        done = np.array_equal(new_labels, labels) or shift <= tol
        labels = new_labels
        if done:
            converged = True
            break
    return KMeansResult(centroids, HardAssignment(labels, K), trace, it, converged, history, reseeds)


def run_kmeans(data: Dataset, init, max_iters: int = 100, tol: float = 0.0, seed=0) -> KMeansResult:
    """Lloyd iterations until the labels stop changing.

    ``wcss_trace[t]`` is the within-cluster sum of squares after update t and
    the reassignment that follows it; it is nonincreasing barring reseeds.
    """

    def assign(points, centroids, rng):
        return np.argmin(euclidean_matrix(points, centroids), axis=1)

    return _lloyd(data, init, max_iters, tol, seed, assign, lambda c, rng: c)


def run_delta_kmeans(
    data: Dataset,
    init,
    delta: float = 0.2,
    noise_var: float = 1e-4,
    max_iters: int = 100,
    seed=0,
    tol: float = 0.0,
) -> KMeansResult:
    """k-means with labels sampled from {k : d_E^k - min_k' d_E^k' <= delta}
    and N(0, noise_var) added to every centroid element after each update."""
    if delta < 0 or noise_var < 0:
        raise ValueError("delta and noise_var must be non-negative")

    def assign(points, centroids, rng):
        return sample_neighbor_labels(euclidean_matrix(points, centroids), delta, rng)

    def noise(centroids, rng):
        if noise_var > 0:
            return centroids + rng.normal(0.0, np.sqrt(noise_var), centroids.shape)
        return centroids

    return _lloyd(data, init, max_iters, tol, seed, assign, noise)
