"""Randomized EM: labels sampled from the delta-neighborhood, noisy M-step."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .core import (
    ConfigError,
    Dataset,
    GmmParams,
    HardAssignment,
    component_log_densities,
    normalize_weights,
    repair_covariance,
    rng_streams,
)
from .distances import gmm_distance_matrix, sample_neighbor_labels
from .em import FitResult, moving_average_converged


@dataclass
class DeltaEmConfig:
    K: int
    delta: float = 0.2
    noise_pi_var: float = 1e-4
    noise_mu_var: float = 1e-4
    noise_sigma_var: float = 1e-6
    max_iters: int = 100
    tol: float = 1e-6
    cov_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.max_iters < 1 or not self.tol > 0:
            raise ConfigError(f"invalid DeltaEmConfig: {self}")
        if self.delta < 0:
            raise ConfigError("delta must be >= 0")
        if min(self.noise_pi_var, self.noise_mu_var, self.noise_sigma_var) < 0:
            raise ConfigError("noise variances must be >= 0")


def delta_e_step(data: Dataset, params: GmmParams, delta: float, rng: np.random.Generator) -> HardAssignment:
    dist = gmm_distance_matrix(data.points, params)
    return HardAssignment(sample_neighbor_labels(dist, delta, rng), params.K)


def hard_estimates(points: np.ndarray, labels: np.ndarray, K: int, reseed_rng: np.random.Generator):
    """Per-cluster (weight, mean, covariance) from a hard labeling.

    Labels of -1 are ignored; weights are cluster fractions of the labeled
    points. Empty clusters get a random data point as mean, identity
    covariance and weight 1/N. Returns (weights, means, covs, n_reseeded).
    """
    N, d = points.shape
    kept = labels >= 0
    n_kept = max(int(kept.sum()), 1)
    weights = np.zeros(K)
    means = np.zeros((K, d))
    covs = np.zeros((K, d, d))
    reseeded = 0
    for k in range(K):
        members = points[labels == k]
        if len(members) == 0:
            means[k] = points[reseed_rng.integers(N)]
            covs[k] = np.eye(d)
            weights[k] = 1.0 / N
            reseeded += 1
            continue
        weights[k] = len(members) / n_kept
        means[k] = members.mean(axis=0)
        diff = members - means[k]
        covs[k] = diff.T @ diff / len(members)
    return weights, means, covs, reseeded


def noisy_m_step(
    data: Dataset,
    assign: HardAssignment,
    config: DeltaEmConfig,
    rng: np.random.Generator,
    reseed_rng: Optional[np.random.Generator] = None,
) -> GmmParams:
    params, _ = _noisy_m_step(data, assign, config, rng, reseed_rng)
    return params


def _noisy_m_step(data, assign, config, rng, reseed_rng=None):
    reseed_rng = reseed_rng if reseed_rng is not None else rng
    K = config.K
    weights, means, covs, reseeded = hard_estimates(data.points, assign.labels, K, reseed_rng)
    if config.noise_pi_var > 0:
        weights = weights + rng.normal(0.0, np.sqrt(config.noise_pi_var), weights.shape)
    if config.noise_mu_var > 0:
        means = means + rng.normal(0.0, np.sqrt(config.noise_mu_var), means.shape)
    if config.noise_sigma_var > 0:
        covs = covs + rng.normal(0.0, np.sqrt(config.noise_sigma_var), covs.shape)
    weights = normalize_weights(weights)
    covs = np.stack([repair_covariance(c, config.cov_floor) for c in covs])
    return GmmParams(weights, means, covs), reseeded


def run_delta_em(data: Dataset, init: GmmParams, config: DeltaEmConfig) -> FitResult:
    """Alternate sampled E-steps and noisy M-steps.

    The log-likelihood trace is not monotone; the loop stops at ``max_iters``
    or when its 5-point moving average changes by less than ``tol``.
    """
    rng, reseed_rng = rng_streams(config.seed)
    params = init
    trace: list[float] = []
    history: list[np.ndarray] = []
    reseeds = 0
    converged = False
    labels = None
    for _ in range(config.max_iters):
        trace.append(float(logsumexp(component_log_densities(data.points, params), axis=1).sum()))
        assign = delta_e_step(data, params, config.delta, rng)
        labels = assign.labels
        history.append(labels)
        if moving_average_converged(trace, config.tol):
            converged = True
            break
        params, n = _noisy_m_step(data, assign, config, rng, reseed_rng)
        reseeds += n
    return FitResult(params, trace, len(trace), converged, reseeds, labels, history)
