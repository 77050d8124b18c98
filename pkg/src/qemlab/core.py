"""Data containers and density evaluation for Gaussian mixture models.

Component indices are 0-based throughout the package. External files
(the dataset CSV) store labels 1-based; see :mod:`qemlab.io`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

LOG_2PI = np.log(2.0 * np.pi)
DISCARD = -1


class CovarianceError(ValueError):
    """Raised when a covariance matrix is not symmetric positive definite."""


class DegenerateWeightsError(ValueError):
    """Raised when mixture weights cannot be normalized."""


class ConfigError(ValueError):
    """Raised for invalid algorithm configuration."""


@dataclass(frozen=True)
class Dataset:
    """N points in d dimensions with optional ground-truth labels (0-based)."""

    points: np.ndarray
    true_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("dataset needs N >= 1 and d >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("dataset contains non-finite points")
        object.__setattr__(self, "points", pts)
        if self.true_labels is not None:
            labels = np.asarray(self.true_labels, dtype=int)
            if labels.shape != (pts.shape[0],):
                raise ValueError("true_labels must have length N")
            if labels.min() < 0:
                raise ValueError("true_labels must be non-negative")
            object.__setattr__(self, "true_labels", labels)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class GmmParams:
    """Mixture weights (K,), means (K, d) and covariances (K, d, d)."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covariances, dtype=float)
        if cov.ndim == 2:
            cov = cov[None]
        K, d = mu.shape
        if w.shape != (K,) or cov.shape != (K, d, d):
            raise ValueError(
                f"inconsistent shapes: weights {w.shape}, means {mu.shape}, "
                f"covariances {cov.shape}"
            )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def permuted(self, order) -> "GmmParams":
        order = np.asarray(order)
        return GmmParams(self.weights[order], self.means[order], self.covariances[order])

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GmmParams":
        return cls(obj["weights"], obj["means"], obj["covariances"])


@dataclass
class HardAssignment:
    """Per-point component labels; ``DISCARD`` (-1) marks unlabeled points."""

    labels: np.ndarray
    K: int = field(default=0)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if self.K == 0:
            self.K = int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def discarded(self) -> np.ndarray:
        return np.flatnonzero(self.labels == DISCARD)

    @property
    def counts(self) -> np.ndarray:
        kept = self.labels[self.labels != DISCARD]
        return np.bincount(kept, minlength=self.K)


def _cholesky(sigma: np.ndarray) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if not np.allclose(sigma, sigma.T, rtol=0.0, atol=1e-9):
        raise CovarianceError("covariance not PD (not symmetric)")
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError("covariance not PD") from exc


def mahalanobis_and_logdet(points: np.ndarray, mu: np.ndarray, sigma: np.ndarray):
    """Return ((y-mu)^T sigma^-1 (y-mu) for each row, ln|sigma|) via Cholesky."""
    L = _cholesky(sigma)
    diff = np.atleast_2d(points) - mu
    z = solve_triangular(L, diff.T, lower=True, check_finite=False)
    quad = np.sum(z * z, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return quad, logdet


def gaussian_logpdf(y, mu, sigma) -> float:
    """Log density ln N(y; mu, sigma) of a single point."""
    y = np.asarray(y, dtype=float)
    quad, logdet = mahalanobis_and_logdet(y[None, :], np.asarray(mu, float), sigma)
    return float(-0.5 * (y.size * LOG_2PI + logdet + quad[0]))


def component_log_densities(points: np.ndarray, params: GmmParams) -> np.ndarray:
    """Matrix of ln(pi^k N(y_i; mu^k, Sigma^k)), shape (N, K).

    Zero-weight components get -inf.
    """
    points = np.atleast_2d(points)
    N, d = points.shape
    out = np.empty((N, params.K))
    with np.errstate(divide="ignore"):
        log_w = np.log(params.weights)
    for k in range(params.K):
        quad, logdet = mahalanobis_and_logdet(points, params.means[k], params.covariances[k])
        out[:, k] = log_w[k] - 0.5 * (d * LOG_2PI + logdet + quad)
    return out


def gmm_log_likelihood(data, params: GmmParams) -> float:
    points = data.points if isinstance(data, Dataset) else np.atleast_2d(data)
    return float(np.sum(logsumexp(component_log_densities(points, params), axis=1)))


def validate_params(params: GmmParams, tol: float = 1e-9) -> list[str]:
    """List every violated GmmParams invariant; empty when the params are valid."""
    problems = []
    total = float(np.sum(params.weights))
    if abs(total - 1.0) > tol:
        problems.append(f"weights sum {total:g} != 1")
    for k, w in enumerate(params.weights):
        if not np.isfinite(w) or w < 0:
            problems.append(f"weight {k} is negative or non-finite ({w:g})")
    for k, sigma in enumerate(params.covariances):
        if not np.all(np.isfinite(sigma)):
            problems.append(f"covariance {k} has non-finite entries")
            continue
        if not np.allclose(sigma, sigma.T, rtol=0.0, atol=tol):
            problems.append(f"covariance {k} not symmetric")
            continue
        if np.linalg.eigvalsh(sigma)[0] <= 0:
            problems.append(f"covariance {k} not PD")
    if not np.all(np.isfinite(params.means)):
        problems.append("means contain non-finite entries")
    return problems


def repair_covariance(sigma, jitter: float = 1e-6) -> np.ndarray:
    """Symmetrize and lift the spectrum so the smallest eigenvalue is >= jitter.

    For a smallest eigenvalue s <= 0 this adds (|s| + jitter) I.
    """
    sigma = np.asarray(sigma, dtype=float)
    sym = 0.5 * (sigma + sigma.T)
    smallest = np.linalg.eigvalsh(sym)[0]
    if smallest < jitter:
        sym = sym + (jitter - smallest) * np.eye(sym.shape[0])
    return sym


def normalize_weights(pi) -> np.ndarray:
    w = np.clip(np.asarray(pi, dtype=float), 0.0, None)
    total = w.sum()
    if not total > 0:
        raise DegenerateWeightsError("degenerate weights")
    return w / total


def rng_streams(seed, n: int = 2) -> list[np.random.Generator]:
    """Independent generators derived from one seed.

    Stream 0 drives sampling/noise, stream 1 drives empty-cluster reseeding.
    Keeping them apart lets randomized algorithms with zero randomness reproduce
    their deterministic counterparts bit for bit.
    """
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in seed.spawn(n)]


def trial_seed(master: int, trial_index: int) -> np.random.SeedSequence:
    """Seed for trial ``trial_index`` of a run with master seed ``master``."""
    return np.random.SeedSequence([int(master), int(trial_index)])
