"""Channel-level emulation of the quantum EM subroutines.

Nothing here simulates a circuit. Each subroutine is replaced by the
distribution of its classical output: amplitude estimation draws from the
exact phase-estimation outcome law, majority voting runs over those draws,
tomography perturbs direction and norm within its error budget, and weight
estimation samples labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .core import (
    DISCARD,
    ConfigError,
    Dataset,
    GmmParams,
    component_log_densities,
    normalize_weights,
    repair_covariance,
    rng_streams,
)
from .delta_em import hard_estimates
from .distances import GMM, DistanceRow, deterministic_labels, gmm_distance_matrix
from .em import FitResult, moving_average_converged

SUCCESS_PROB = 8.0 / np.pi**2
UNIT_TOL = 1e-9
MAX_GRID_LOG2 = 48
_WINDOW = 32
_FULL_GRID_LIMIT = 128


@dataclass(frozen=True)
class AeChannel:
    grid_size: int

    def __post_init__(self):
        if int(self.grid_size) < 2:
            raise ConfigError("amplitude estimation needs grid_size >= 2")


@dataclass(frozen=True)
class ModeEvalSpec:
    copies: int
    delta_fail: float = 0.01
    a0: float = SUCCESS_PROB

    def __post_init__(self):
        if self.copies < 1:
            raise ConfigError("mode evaluation needs at least one copy")
        if not 0.5 < self.a0 <= 1.0:
            raise ConfigError("a0 must lie in (1/2, 1]")

    @classmethod
    def from_failure(cls, delta_fail: float = 0.01, a0: float = SUCCESS_PROB) -> "ModeEvalSpec":
        """Smallest L with exp(-2 L (a0 - 1/2)^2) <= delta_fail."""
        if not 0.0 < delta_fail < 1.0:
            raise ConfigError("failure probability must lie in (0, 1)")
        return cls(copies_for_failure(delta_fail, a0), delta_fail, a0)


def copies_for_failure(delta_fail: float, a0: float = SUCCESS_PROB) -> int:
    return int(math.ceil(math.log(1.0 / delta_fail) / (2.0 * (abs(a0) - 0.5) ** 2)))


@dataclass(frozen=True)
class TomographyChannel:
    eps_dir: float = 0.0
    eps_norm: float = 0.0

    def __post_init__(self):
        if self.eps_dir < 0 or self.eps_norm < 0:
            raise ConfigError("tomography precisions must be >= 0")


@dataclass
class QemConfig:
    """Precision and loop settings for the emulated quantum EM.

    ``eps1 == 0`` switches the distance channel off (exact distances) and
    ``n_pi_samples=None`` uses exact label frequencies for the weights.
    """

    K: int
    delta: float = 0.2
    eps1: float = 0.09
    mu_channel: TomographyChannel = field(default_factory=TomographyChannel)
    sigma_channel: TomographyChannel = field(default_factory=TomographyChannel)
    n_pi_samples: Optional[int] = None
    mode_failure: float = 0.01
    a0: float = SUCCESS_PROB
    eps2: float = 1e-8
    max_iters: int = 100
    tol: float = 1e-6
    cov_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.mu_channel, dict):
            self.mu_channel = TomographyChannel(**self.mu_channel)
        if isinstance(self.sigma_channel, dict):
            self.sigma_channel = TomographyChannel(**self.sigma_channel)
        if self.K < 1 or self.max_iters < 1 or not self.tol > 0:
            raise ConfigError(f"invalid QemConfig: {self}")
        if self.delta < 0 or self.eps1 < 0:
            raise ConfigError("delta and eps1 must be >= 0")
        if self.eps1 > 0 and not self.eps1 < self.delta / 2:
            raise ConfigError(f"eps1={self.eps1} must be < delta/2={self.delta / 2}")
        if self.n_pi_samples is not None and self.n_pi_samples < 1:
            raise ConfigError("n_pi_samples must be >= 1")

    @property
    def mode_spec(self) -> ModeEvalSpec:
        return ModeEvalSpec.from_failure(self.mode_failure, self.a0)

    @classmethod
    def from_budget(cls, budget, K: int, pi_failure: float = 0.05, **kwargs) -> "QemConfig":
        """Build a config from an :class:`qemlab.cost.EpsilonBudget`."""
        return cls(
            K=K,
            delta=budget.delta,
            eps1=budget.eps1,
            mu_channel=TomographyChannel(budget.eps3_mu, budget.eps4_mu),
            sigma_channel=TomographyChannel(budget.eps3_sigma, budget.eps4_sigma),
            n_pi_samples=hoeffding_sample_count(K, budget.eps4_pi, pi_failure),
            **kwargs,
        )

    def check_budget(self, eta_mu: float, eta_sigma: float) -> None:
        """Raise unless every tomography precision is 0 or below delta/(4 sqrt(eta))."""
        for name, eps, eta in [
            ("mu eps_dir", self.mu_channel.eps_dir, eta_mu),
            ("mu eps_norm", self.mu_channel.eps_norm, eta_mu),
            ("sigma eps_dir", self.sigma_channel.eps_dir, eta_sigma),
            ("sigma eps_norm", self.sigma_channel.eps_norm, eta_sigma),
        ]:
            bound = self.delta / (4.0 * math.sqrt(eta))
            if eps > 0 and not eps < bound:
                raise ConfigError(f"{name}={eps} must be < {bound:g}")

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "delta": self.delta,
            "eps1": self.eps1,
            "mu_channel": {"eps_dir": self.mu_channel.eps_dir, "eps_norm": self.mu_channel.eps_norm},
            "sigma_channel": {"eps_dir": self.sigma_channel.eps_dir, "eps_norm": self.sigma_channel.eps_norm},
            "n_pi_samples": self.n_pi_samples,
            "mode_failure": self.mode_failure,
            "a0": self.a0,
            "eps2": self.eps2,
            "max_iters": self.max_iters,
            "tol": self.tol,
            "cov_floor": self.cov_floor,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# amplitude estimation


def inner_product_probability(y_hat, mu_hat, G=None) -> float:
    """Probability of reading 1 on the ancilla: (1 - y^T G^2 mu) / 2."""
    y_hat = np.asarray(y_hat, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    for v in (y_hat, mu_hat):
        if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
            raise ValueError("inputs must be unit vectors")
    overlap = y_hat @ mu_hat if G is None else y_hat @ (np.asarray(G) @ (np.asarray(G) @ mu_hat))
    return float(np.clip(0.5 * (1.0 - overlap), 0.0, 1.0))


def _fejer(offset: np.ndarray, P: int) -> np.ndarray:
    """sin^2(P pi x) / (P^2 sin^2(pi x)) with x = offset / P, equal to 1 at x = 0."""
    num = np.sin(np.pi * offset) ** 2
    den = (P * np.sin(np.pi * offset / P)) ** 2
    out = np.ones_like(num)
    nz = den > 1e-300
    out[nz] = num[nz] / den[nz]
    return out


def ae_outcome_distribution(p: float, grid_size: int) -> np.ndarray:
    """Probability of each measured grid index m in 0..P-1.

    Mixture of the two phase-estimation branches at +theta and -theta with
    theta = arcsin(sqrt(p)) / pi, normalized by explicit summation.
    """
    P = int(grid_size)
    theta = np.arcsin(np.sqrt(np.clip(p, 0.0, 1.0))) / np.pi
    m = np.arange(P)
    probs = np.zeros(P)
    for branch in (theta, -theta):
        diff = m / P - branch
        diff = diff - np.round(diff)  # circular distance on the unit circle
        probs += _fejer(P * diff, P)
    return probs / probs.sum()


def grid_values(grid_size: int) -> np.ndarray:
    P = int(grid_size)
    return np.sin(np.pi * np.arange(P) / P) ** 2


def ae_sample(p: float, channel: AeChannel, rng: np.random.Generator, size=None):
    """Draw amplitude-estimation estimates of ``p`` (one float, or an array for ``size``)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    probs = ae_outcome_distribution(p, channel.grid_size)
    m = _fold(rng.choice(channel.grid_size, size=size, p=probs), channel.grid_size)
    values = grid_values(channel.grid_size)[m]
    return float(values) if size is None else values


def brassard_bound(p, grid_size: int):
    """2 pi sqrt(p(1-p)) / P + (pi / P)^2."""
    return 2 * np.pi * np.sqrt(np.asarray(p) * (1 - np.asarray(p))) / grid_size + (np.pi / grid_size) ** 2


def _sample_branch_indices(theta: np.ndarray, P: int, copies: int, rng: np.random.Generator) -> np.ndarray:
    """Grid indices drawn from the +theta branch for many entries sharing one P.

    Returned indices are folded to 0..P/2; the -theta branch mirrors m -> P - m,
    which gives the same estimate sin^2(pi m / P), so the folded law equals
    that of the full two-branch distribution.
    """
    n = theta.size
    if P <= _FULL_GRID_LIMIT:
        m = np.arange(P)
        diff = m[None, :] / P - theta[:, None]
        diff = diff - np.round(diff)
        probs = _fejer(P * diff, P)
        cdf = np.cumsum(probs / probs.sum(axis=1, keepdims=True), axis=1)
        u = rng.random((n, copies))
        idx = np.minimum((cdf[:, None, :] < u[:, :, None]).sum(axis=-1), P - 1)
        return _fold(idx, P)

    W = _WINDOW
    x = P * theta
    n0 = np.floor(x)
    f = x - n0
    j = np.arange(-W + 1, W + 1)
    probs = _fejer(j[None, :] - f[:, None], P)
    cdf = np.cumsum(probs, axis=1)
    u = rng.random((n, copies))
    pos = (cdf[:, None, :] < u[:, :, None]).sum(axis=-1)
    m = n0[:, None] + j[np.minimum(pos, 2 * W - 1)]
    tail = pos >= 2 * W
    if tail.any():
        rows, cols = np.nonzero(tail)
        m[rows, cols] = _sample_tail(n0[rows], f[rows], P, rng)
    return _fold(m.astype(np.int64), P)


def _sample_tail(n0: np.ndarray, f: np.ndarray, P: int, rng: np.random.Generator) -> np.ndarray:
    """Exact rejection sampler for grid indices outside the central window.

    Proposal: side uniform, distance j >= W with P(j) = W / (j (j + 1)),
    drawn as floor(W / U). Envelope from sin(x) >= 2x/pi on [0, pi/2].
    """
    W = _WINDOW
    right_len = (P - 2 * W) // 2
    left_len = P - 2 * W - right_len
    out = np.empty(n0.size)
    pending = np.arange(n0.size)
    while pending.size:
        k = pending.size
        j = np.floor(W / (1.0 - rng.random(k)))  # 1-U lies in (0, 1]
        right = rng.random(k) < 0.5
        step = j - W + 1  # 1-based distance past the window edge
        in_range = np.where(right, step <= right_len, step <= left_len)
        m = np.where(right, n0[pending] + W + step, n0[pending] - W + 1 - step)
        t = m - (n0[pending] + f[pending])
        with np.errstate(divide="ignore", invalid="ignore"):
            accept_prob = 2.0 * j * (j + 1) / (P * np.sin(np.pi * t / P)) ** 2
        accept = in_range & (rng.random(k) < accept_prob)
        out[pending[accept]] = m[accept]
        pending = pending[~accept]
    return out


def _fold(m: np.ndarray, P: int) -> np.ndarray:
    m = np.mod(m, P)
    return np.minimum(m, P - m)


def mode_evaluate(samples, spec: Optional[ModeEvalSpec] = None) -> float:
    """Most frequent value among the samples; ties go to the smaller value."""
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size == 0:
        raise ValueError("mode evaluation needs at least one sample")
    if spec is not None and samples.size != spec.copies:
        raise ValueError(f"expected {spec.copies} samples, got {samples.size}")
    values, counts = np.unique(samples, return_counts=True)
    return float(values[np.argmax(counts)])


def _row_modes(samples: np.ndarray) -> np.ndarray:
    """Row-wise mode of an integer matrix, ties to the smallest value."""
    s = np.sort(samples, axis=1)
    counts = (s[:, :, None] == s[:, None, :]).sum(axis=2)
    return s[np.arange(s.shape[0]), np.argmax(counts, axis=1)]


def required_grid_size(scale, eps1: float) -> np.ndarray:
    """Smallest power of two P >= 2 with scale * (pi/P + (pi/P)^2) <= eps1.

    ``scale`` is 4 |G y| |G mu|, the factor turning an error in p into an
    error in the reconstructed quadratic form.
    """
    scale = np.asarray(scale, dtype=float)
    t = eps1 / np.maximum(scale, 1e-300)
    z = (np.sqrt(1.0 + 4.0 * t) - 1.0) / 2.0
    log2 = np.ceil(np.log2(np.pi / z))
    return 2.0 ** np.clip(log2, 1, MAX_GRID_LOG2)


def _inv_sqrt(sigma: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(sigma)
    if vals[0] <= 0:
        raise ValueError("covariance not PD")
    return (vecs / np.sqrt(vals)) @ vecs.T


def noisy_distance_matrix(points: np.ndarray, params: GmmParams, config: QemConfig, rng: np.random.Generator):
    """Square GMM distances as read out through the amplitude-estimation channel.

    Returns (noisy, exact, within_eps1), all shaped (N, K). The quadratic term
    is rebuilt from the estimated overlap and the known norms |G y|, |G mu|
    with G = Sigma^{-1/2}; ln|Sigma| - 2 ln(K pi) is added exactly.
    """
    points = np.atleast_2d(points)
    exact = gmm_distance_matrix(points, params)
    if config.eps1 == 0:
        return exact.copy(), exact, np.ones(exact.shape, dtype=bool)
    N, K = exact.shape
    copies = config.mode_spec.copies
    noisy = exact.copy()
    for k in range(K):
        if not np.isfinite(exact[0, k]):
            continue
        G = _inv_sqrt(params.covariances[k])
        a = points @ G
        b = G @ params.means[k]
        na = np.linalg.norm(a, axis=1)
        nb = float(np.linalg.norm(b))
        active = (na > 0) & (nb > 0)
        if not active.any():
            continue
        cos = np.clip((a[active] @ b) / (na[active] * nb), -1.0, 1.0)
        p = 0.5 * (1.0 - cos)
        theta = np.arcsin(np.sqrt(p)) / np.pi
        scale = 4.0 * na[active] * nb
        grids = required_grid_size(scale, config.eps1)
        p_est = np.empty_like(p)
        for P in np.unique(grids):
            sel = grids == P
            folded = _sample_branch_indices(theta[sel], int(P), copies, rng)
            m = _row_modes(folded)
            p_est[sel] = np.sin(np.pi * m / P) ** 2
        noisy[np.flatnonzero(active), k] += scale * (p_est - p)
    with np.errstate(invalid="ignore"):
        # dead components (zero weight) sit at +inf in both matrices
        ok = (noisy == exact) | (np.abs(noisy - exact) <= config.eps1 + 1e-9)
    return noisy, exact, ok


def noisy_distance_row(y, params: GmmParams, config: QemConfig, rng: np.random.Generator) -> DistanceRow:
    noisy, _, _ = noisy_distance_matrix(np.asarray(y, float)[None, :], params, config, rng)
    return DistanceRow(noisy[0], GMM)


# ---------------------------------------------------------------------------
# tomography and weights


def tomography_apply(v, channel: TomographyChannel, rng: np.random.Generator) -> np.ndarray:
    """Read a vector back with direction error <= eps_dir and relative norm error <= eps_norm.

    The unit direction is rotated toward a random orthogonal direction so that
    the chord length is ``eps_dir * U`` (U uniform on [0, 1]); the norm is
    scaled by 1 + xi with xi uniform on [-eps_norm, eps_norm].
    """
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("cannot read out a zero vector")
    if channel.eps_dir == 0 and channel.eps_norm == 0:
        return v.copy()
    u = v / norm
    if channel.eps_dir > 0 and v.size > 1:
        t = rng.standard_normal(v.size)
        t -= (t @ u) * u
        t /= np.linalg.norm(t)
        chord = channel.eps_dir * rng.random()
        angle = 2.0 * np.arcsin(min(chord / 2.0, 1.0))
        u = np.cos(angle) * u + np.sin(angle) * t
    xi = rng.uniform(-channel.eps_norm, channel.eps_norm) if channel.eps_norm > 0 else 0.0
    return norm * (1.0 + xi) * u


def hoeffding_sample_count(K: int, eps4_pi: float, pi_failure: float) -> int:
    """Label draws so every weight is within eps4_pi with probability 1 - pi_failure."""
    each = 1.0 - (1.0 - pi_failure) ** (1.0 / K)
    return int(math.ceil(2.0 * K / eps4_pi**2 * math.log(2.0 / each)))


def estimate_weights(label_probs, K: int, n_pi_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Empirical label frequencies from ``n_pi_samples`` i.i.d. draws."""
    probs = np.asarray(label_probs, dtype=float)
    if n_pi_samples < 1:
        raise ValueError("n_pi_samples must be >= 1")
    draws = rng.choice(K, size=n_pi_samples, p=probs / probs.sum())
    return np.bincount(draws, minlength=K) / n_pi_samples


# ---------------------------------------------------------------------------
# full loop


def _label_violations(labels: np.ndarray, exact: np.ndarray, delta: float, ok: np.ndarray) -> tuple[int, int]:
    """(labels outside the exact delta-neighborhood, labels checked), over rows read out within eps1."""
    rows = np.flatnonzero((labels != DISCARD) & ok.all(axis=1))
    if rows.size == 0:
        return 0, 0
    gap = exact[rows, labels[rows]] - exact[rows].min(axis=1)
    return int(np.sum(gap > delta)), int(rows.size)


def run_qem_emulation(data: Dataset, init: GmmParams, config: QemConfig) -> FitResult:
    """Emulated quantum EM loop.

    Each iteration reads distances through the noisy channel, labels points by
    the 2-delta margin rule (discarding ambiguous ones), estimates the cluster
    parameters from the labeled points and passes means, covariances and
    weights through their readout channels.
    """
    from .cost import eta_values

    config.check_budget(*eta_values(data))
    rng, reseed_rng = rng_streams(config.seed)
    X = data.points
    K = config.K
    params = init
    trace: list[float] = []
    history: list[np.ndarray] = []
    discards: list[int] = []
    violations = 0
    checked = 0
    mode_failures = 0
    reseeds = 0
    converged = False
    labels = None
    small = 0
    for _ in range(config.max_iters):
        trace.append(float(logsumexp(component_log_densities(X, params), axis=1).sum()))
        noisy, exact, ok = noisy_distance_matrix(X, params, config, rng)
        labels = deterministic_labels(noisy, config.delta)
        history.append(labels)
        discards.append(int(np.sum(labels == DISCARD)))
        v, c = _label_violations(labels, exact, config.delta, ok)
        violations += v
        checked += c
        mode_failures += int(np.sum(~ok))
        if moving_average_converged(trace, config.tol):
            converged = True
            break

        weights, means, covs, n = hard_estimates(X, labels, K, reseed_rng)
        reseeds += n
        counts = np.bincount(labels[labels != DISCARD], minlength=K)
        small += int(np.sum((counts > 0) & (counts < 0.1 * X.shape[0] / K)))
        if config.n_pi_samples is not None and counts.sum() > 0:
            sampled = estimate_weights(counts, K, config.n_pi_samples, rng)
            weights = np.where(counts > 0, sampled, weights)
        for k in range(K):
            if np.any(means[k]):
                means[k] = tomography_apply(means[k], config.mu_channel, rng)
            if np.any(covs[k]):
                covs[k] = tomography_apply(covs[k].ravel(), config.sigma_channel, rng).reshape(covs[k].shape)
        weights = normalize_weights(weights)
        covs = np.stack([repair_covariance(c, config.cov_floor) for c in covs])
        params = GmmParams(weights, means, covs)

    return FitResult(
        params,
        trace,
        len(trace),
        converged,
        reseeds,
        labels,
        history,
        discards,
        extra={
            "label_violations": violations,
            "labels_checked": checked,
            "mode_failures": mode_failures,
            "small_cluster_events": small,
        },
    )
