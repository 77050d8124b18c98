"""Runtime expression of the emulated quantum EM evaluated on concrete data.

All quantities are dimensionless oracle-call counts with constants and
polylogarithmic factors dropped, so only ratios between reports are meaningful.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .core import ConfigError, Dataset

MU_GRID_POINTS = 201


@dataclass(frozen=True)
class DataMatrices:
    V1: np.ndarray
    V2: np.ndarray

    @classmethod
    def from_points(cls, points) -> "DataMatrices":
        V1 = np.atleast_2d(np.asarray(points, dtype=float))
        V2 = np.einsum("ni,nj->nij", V1, V1).reshape(V1.shape[0], -1)
        return cls(V1, V2)


@dataclass(frozen=True)
class EpsilonBudget:
    delta: float
    eps1: float
    eps3_mu: float
    eps4_mu: float
    eps3_sigma: float
    eps4_sigma: float
    eps4_pi: float

    def scaled(self, **factors) -> "EpsilonBudget":
        values = asdict(self)
        for name, factor in factors.items():
            values[name] *= factor
        return EpsilonBudget(**values)


@dataclass(frozen=True)
class CostReport:
    kappa_v1: float
    kappa_v2: float
    mu_v1: float
    mu_v2: float
    eta_mu: float
    eta_sigma: float
    term_pi: float
    term_pi_main: float
    term_pi_itemized: float
    term_mu_tomo: float
    term_mu_norm: float
    term_sigma_tomo: float
    term_sigma_norm: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


def s_p(M, p: float) -> float:
    """max_i sum_j |M_ij|^p over nonzero entries (so 0^p contributes nothing)."""
    A = np.abs(np.atleast_2d(np.asarray(M, dtype=float)))
    nz = A > 0
    powered = np.zeros_like(A)
    powered[nz] = A[nz] ** p
    return float(powered.sum(axis=1).max())


def _mu_objective(M, MT, p):
    return math.sqrt(s_p(M, 2 * p) * s_p(MT, 1 - 2 * p))


def mu_coherence(M, grid_points: int = MU_GRID_POINTS) -> float:
    """min(|M|_F, min over p in [0, 1] of sqrt(s_{2p}(M) s_{1-2p}(M^T))).

    Coarse grid search followed by a bounded Brent refinement around the best
    grid point.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.any(M):
        raise ValueError("mu_coherence needs a nonzero matrix")
    MT = M.T
    grid = np.linspace(0.0, 1.0, grid_points)
    values = np.array([_mu_objective(M, MT, p) for p in grid])
    i = int(np.argmin(values))
    best = values[i]
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid_points - 1)]
    if hi > lo:
        res = minimize_scalar(lambda p: _mu_objective(M, MT, p), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        best = min(best, float(res.fun))
    return float(min(np.linalg.norm(M, "fro"), best))


def condition_number(M, rel_cutoff: float = 1e-12) -> float:
    """sigma_max / sigma_min over singular values above rel_cutoff * sigma_max."""
    sv = np.linalg.svd(np.atleast_2d(np.asarray(M, dtype=float)), compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        raise ValueError("condition number of a zero matrix")
    kept = sv[sv > rel_cutoff * sv[0]]
    return float(sv[0] / kept[-1])


def eta_values(data) -> tuple[float, float]:
    """(max_i |y_i|^2, max_i |y_i (x) y_i|^2); the second is the square of the first."""
    points = data.points if isinstance(data, Dataset) else np.atleast_2d(data)
    eta_mu = float(np.max(np.einsum("ij,ij->i", points, points)))
    return eta_mu, eta_mu * eta_mu


def epsilon_budget(delta: float, eta_mu: float, eta_sigma: float, margin: float = 0.1) -> EpsilonBudget:
    """Precisions strictly inside the consistency bounds.

    eps1 < delta/2, eps3/eps4 (means) < delta/(4 sqrt(eta_mu)), and likewise
    for covariances with eta_sigma; each bound is shrunk by (1 - margin).
    The weight precision defaults to eps1.
    """
    if not delta > 0:
        raise ConfigError("delta must be positive")
    if not 0 < margin < 1:
        raise ConfigError("margin must lie in (0, 1)")
    keep = 1.0 - margin
    eps1 = delta / 2 * keep
    e_mu = delta / (4 * math.sqrt(eta_mu)) * keep
    e_sigma = delta / (4 * math.sqrt(eta_sigma)) * keep
    return EpsilonBudget(delta, eps1, e_mu, e_mu, e_sigma, e_sigma, eps1)


def qem_runtime_estimate(matrices: DataMatrices, K: int, budget: EpsilonBudget) -> CostReport:
    """Evaluate each bracketed term of the per-iteration runtime expression."""
    b = budget
    if min(b.eps1, b.eps3_mu, b.eps4_mu, b.eps3_sigma, b.eps4_sigma, b.eps4_pi) <= 0:
        raise ConfigError("every precision must be positive")
    d = matrices.V1.shape[1]
    kappa1 = condition_number(matrices.V1)
    kappa2 = condition_number(matrices.V2)
    mu1 = mu_coherence(matrices.V1)
    mu2 = mu_coherence(matrices.V2)
    eta_mu, eta_sigma = eta_values(matrices.V1)

    term_pi_main = K**2 / (b.eps1 * b.eps4_pi**2)
    term_pi_itemized = K * term_pi_main
    term_mu_tomo = K * d * kappa1 / b.eps4_mu**2 * (mu1 + K * eta_mu / b.eps1)
    term_mu_norm = K**2 / b.eps1 * eta_mu * kappa1 * mu1 / b.eps3_mu
    term_sigma_tomo = K * d**2 * kappa2 / b.eps4_sigma**2 * (mu2 + K * eta_sigma / b.eps1)
    term_sigma_norm = K**2 / b.eps1 * eta_sigma * kappa2 * mu2 / b.eps3_sigma
    term_pi = term_pi_itemized
    total = term_pi + term_mu_tomo + term_mu_norm + term_sigma_tomo + term_sigma_norm
    return CostReport(
        kappa1, kappa2, mu1, mu2, eta_mu, eta_sigma,
        term_pi, term_pi_main, term_pi_itemized, term_mu_tomo, term_mu_norm, term_sigma_tomo, term_sigma_norm,
        total,
    )


def norm_split_gap(a, b) -> float:
    """Right side minus left side of the norm-splitting inequality.

    | |a| a_hat - |b| b_hat | <= |a| |a_hat - b_hat| + ||a| - |b||, so the
    returned value is >= 0 up to rounding.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    lhs = np.linalg.norm(na * (a / na) - nb * (b / nb))
    rhs = na * np.linalg.norm(a / na - b / nb) + abs(na - nb)
    return float(rhs - lhs)
