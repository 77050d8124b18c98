"""Expectation-maximization for full-covariance Gaussian mixtures."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .core import (
    ConfigError,
    Dataset,
    GmmParams,
    component_log_densities,
    repair_covariance,
    rng_streams,
)

logger = logging.getLogger(__name__)

EMPTY_MASS = 1e-12


@dataclass
class EmConfig:
    K: int
    max_iters: int = 100
    tol: float = 1e-6
    cov_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.max_iters < 1 or not self.tol > 0 or self.cov_floor < 0:
            raise ConfigError(f"invalid EmConfig: {self}")


@dataclass
class FitResult:
    """Outcome of one fit.

    ``labels`` is the final hard assignment produced by the algorithm's own
    decoder (argmax responsibility for EM, sampled labels for the randomized
    variants, -1 for discarded points).
    """

    params: GmmParams
    loglik_trace: list[float]
    iterations: int
    converged: bool
    reseeds: int = 0
    labels: Optional[np.ndarray] = None
    label_history: list[np.ndarray] = field(default_factory=list, repr=False)
    discard_trace: list[int] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "params": self.params.to_dict(),
            "loglik_trace": [float(v) for v in self.loglik_trace],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "reseeds": int(self.reseeds),
        }
        if self.labels is not None:
            out["labels"] = [int(v) for v in self.labels]
        if self.discard_trace:
            out["discard_trace"] = [int(v) for v in self.discard_trace]
        out.update(self.extra)
        return out


def e_step(data: Dataset, params: GmmParams) -> np.ndarray:
    """Responsibilities r[i, k], computed in the log domain."""
    log_p = component_log_densities(data.points, params)
    return np.exp(log_p - logsumexp(log_p, axis=1, keepdims=True))


def _reseed(k, points, rng, weights, means, covs):
    N, d = points.shape
    means[k] = points[rng.integers(N)]
    covs[k] = np.eye(d)
    weights[k] = 1.0 / N
    logger.info("reseeded empty component %d", k)


def empty_components(resp: np.ndarray) -> np.ndarray:
    return np.flatnonzero(np.asarray(resp).sum(axis=0) <= EMPTY_MASS)


def m_step(
    data: Dataset,
    resp: np.ndarray,
    cov_floor: float = 1e-6,
    rng: Optional[np.random.Generator] = None,
) -> GmmParams:
    """Maximum-likelihood update from responsibilities.

    Components whose responsibility mass is (numerically) zero are reseeded:
    mean at a random data point, identity covariance, weight 1/N, after which
    the weights are renormalized.
    """
    X = data.points
    N, d = X.shape
    resp = np.asarray(resp, dtype=float)
    K = resp.shape[1]
    mass = resp.sum(axis=0)
    weights = mass / N
    means = np.zeros((K, d))
    covs = np.zeros((K, d, d))
    empty = mass <= EMPTY_MASS
    for k in range(K):
        if empty[k]:
            continue
        means[k] = resp[:, k] @ X / mass[k]
        diff = X - means[k]
        covs[k] = repair_covariance((resp[:, k, None] * diff).T @ diff / mass[k], cov_floor)
    if empty.any():
        rng = rng if rng is not None else np.random.default_rng(0)
        for k in np.flatnonzero(empty):
            _reseed(k, X, rng, weights, means, covs)
        weights = weights / weights.sum()
    return GmmParams(weights, means, covs)


def one_hot(labels: np.ndarray, K: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    r = np.zeros((labels.size, K))
    keep = labels >= 0
    r[np.flatnonzero(keep), labels[keep]] = 1.0
    return r


def random_init(data: Dataset, K: int, seed=0, cov_floor: float = 1e-6) -> GmmParams:
    """Randomly partition the points into K nonempty clusters and fit each.

    A shuffled round-robin split keeps every cluster nonempty when N >= K.
    """
    if data.N < K:
        raise ConfigError(f"need at least K={K} points, got {data.N}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    labels = rng.permutation(data.N) % K
    return m_step(data, one_hot(labels, K), cov_floor)


def random_labels(N: int, K: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(N) % K


def moving_average_converged(trace: list[float], tol: float, window: int = 5) -> bool:
    """True once the ``window``-point moving average of the trace stalls."""
    if len(trace) < window + 1:
        return False
    prev = np.mean(trace[-window - 1 : -1])
    cur = np.mean(trace[-window:])
    return abs(cur - prev) < tol


def run_em(data: Dataset, init: GmmParams, config: EmConfig) -> FitResult:
    """Iterate E and M steps from ``init``.

    ``loglik_trace[t]`` is the log-likelihood of the t-th parameter set; the
    loop stops when consecutive values differ by less than ``config.tol``.
    """
    _, reseed_rng = rng_streams(config.seed)
    params = init
    trace: list[float] = []
    reseeds = 0
    converged = False
    for _ in range(config.max_iters):
        log_p = component_log_densities(data.points, params)
        norm = logsumexp(log_p, axis=1, keepdims=True)
        trace.append(float(norm.sum()))
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < config.tol:
            converged = True
            break
        resp = np.exp(log_p - norm)
        reseeds += empty_components(resp).size
        params = m_step(data, resp, config.cov_floor, reseed_rng)
    else:
        log_p = component_log_densities(data.points, params)
    labels = np.argmax(log_p, axis=1)
    return FitResult(params, trace, len(trace), converged, reseeds, labels)


def run_classification_em(data: Dataset, init: GmmParams, config: EmConfig) -> FitResult:
    """Hard-assignment EM: each point goes wholly to its most probable component.

    Uses the same moving-average stopping rule as the randomized variants so
    that label sequences are directly comparable.
    """
    _, reseed_rng = rng_streams(config.seed)
    params = init
    trace: list[float] = []
    history: list[np.ndarray] = []
    reseeds = 0
    converged = False
    labels = None
    for _ in range(config.max_iters):
        log_p = component_log_densities(data.points, params)
        trace.append(float(logsumexp(log_p, axis=1).sum()))
        labels = np.argmax(log_p, axis=1)
        history.append(labels)
        if moving_average_converged(trace, config.tol):
            converged = True
            break
        resp = one_hot(labels, params.K)
        reseeds += empty_components(resp).size
        params = m_step(data, resp, config.cov_floor, reseed_rng)
    return FitResult(params, trace, len(trace), converged, reseeds, labels, history)

