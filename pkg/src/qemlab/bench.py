"""Synthetic examples, success rates and multi-trial benchmarks."""

from __future__ import annotations

import csv
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import ConfigError, Dataset, GmmParams, trial_seed
from .cost import epsilon_budget, eta_values
from .delta_em import DeltaEmConfig, run_delta_em
from .em import EmConfig, one_hot, m_step, random_labels, run_classification_em, run_em
from .io import read_dataset_csv
from .kmeans import kmeans_log_likelihood, run_delta_kmeans, run_kmeans
from .quantum import QemConfig, run_qem_emulation

logger = logging.getLogger(__name__)

ALGORITHMS = ("em", "delta_em", "kmeans", "delta_kmeans", "qem_emulation", "classification_em")

EXAMPLE_1 = GmmParams(
    [0.5, 0.5],
    [[0.3, 0.0], [-0.3, 0.0]],
    [[[1.0, 0.98], [0.98, 1.0]], [[1.0, -0.98], [-0.98, 1.0]]],
)
EXAMPLE_2 = GmmParams(
    [0.7, 0.3],
    [[0.0, -0.5], [0.0, 0.0]],
    [[[1.0, 0.0], [0.0, 1.0]], [[10.0, 0.0], [0.0, 0.1]]],
)
EXAMPLES = {"I": EXAMPLE_1, "II": EXAMPLE_2}


def sample_gmm(params: GmmParams, n: int, seed=0) -> Dataset:
    """Draw n labeled points from a Gaussian mixture."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    labels = rng.choice(params.K, size=n, p=params.weights)
    chol = np.linalg.cholesky(params.covariances)
    z = rng.standard_normal((n, params.d))
    points = params.means[labels] + np.einsum("nij,nj->ni", chol[labels], z)
    return Dataset(points, labels)


def generate_example1(n: int = 1000, seed=0) -> Dataset:
    return sample_gmm(EXAMPLE_1, n, seed)


def generate_example2(n: int = 1000, seed=0) -> Dataset:
    return sample_gmm(EXAMPLE_2, n, seed)


def generate_example(example, n: int = 1000, seed=0) -> Dataset:
    key = {"1": "I", "2": "II"}.get(str(example), str(example).upper())
    if key not in EXAMPLES:
        raise ConfigError(f"unknown example {example!r}")
    return sample_gmm(EXAMPLES[key], n, seed)


def success_rate(predicted, truth, K: Optional[int] = None) -> float:
    """Best fraction of correctly labeled points over relabelings of the prediction.

    Discarded points (label -1) always count as wrong. Up to K = 8 every
    permutation is tried; larger K uses an optimal assignment solver.
    """
    pred = np.asarray(getattr(predicted, "labels", predicted), dtype=int)
    truth = np.asarray(truth, dtype=int)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if truth.size == 0:
        return 0.0
    K = max(K or 0, int(truth.max()) + 1, int(pred.max()) + 1)
    keep = pred >= 0
    confusion = np.zeros((K, K))
    np.add.at(confusion, (pred[keep], truth[keep]), 1)
    if K <= 8:
        best = max(confusion[np.arange(K), list(perm)].sum() for perm in itertools.permutations(range(K)))
    else:
        logger.warning("K=%d: using an assignment solver instead of trying all permutations", K)
        rows, cols = linear_sum_assignment(-confusion)
        best = confusion[rows, cols].sum()
    return float(best / truth.size)


@dataclass
class ExperimentConfig:
    example: str = "I"
    algorithm: str = "delta_em"
    trials: int = 100
    seed: int = 0
    n: int = 1000
    K: int = 2
    data_seed: Optional[int] = None
    data_path: Optional[str] = None
    algo_config: dict = field(default_factory=dict)
    output_path: Optional[str] = None
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.example == "custom" and not self.data_path:
            raise ConfigError("custom example needs data_path")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        obj["algorithm"] = obj.get("algorithm", "delta_em").replace("-", "_")
        return cls(**obj)

    def load_data(self) -> Dataset:
        if self.example == "custom":
            return read_dataset_csv(self.data_path)
        seed = self.seed if self.data_seed is None else self.data_seed
        return generate_example(self.example, self.n, seed)


@dataclass
class TrialOutcome:
    trial: int
    success_rate: float
    final_loglik: float
    iterations: int
    seed_used: list
    discarded: int = 0

    def __post_init__(self):
        if not 0.0 <= self.success_rate <= 1.0:
            raise ValueError("success_rate must lie in [0, 1]")


def _trial_seeds(master: int, trial: int) -> tuple[int, int]:
    init_seed, algo_seed = trial_seed(master, trial).generate_state(2)
    return int(init_seed), int(algo_seed)


def fit_algorithm(data: Dataset, algorithm: str, K: int, algo_config: dict, init_seed: int, algo_seed: int):
    """Run one fit from a random hard-assignment start.

    Returns (labels, final_loglik, iterations, result object).
    """
    cfg = dict(algo_config)
    cfg.pop("seed", None)
    labels0 = random_labels(data.N, K, np.random.default_rng(init_seed))
    init = m_step(data, one_hot(labels0, K), cfg.get("cov_floor", 1e-6))

    if algorithm == "em":
        res = run_em(data, init, EmConfig(K, seed=algo_seed, **cfg))
        return res.labels, res.loglik_trace[-1], res.iterations, res
    if algorithm == "classification_em":
        res = run_classification_em(data, init, EmConfig(K, seed=algo_seed, **cfg))
        return res.labels, res.loglik_trace[-1], res.iterations, res
    if algorithm == "delta_em":
        res = run_delta_em(data, init, DeltaEmConfig(K, seed=algo_seed, **cfg))
        return res.labels, res.loglik_trace[-1], res.iterations, res
    if algorithm == "qem_emulation":
        delta = cfg.pop("delta", 0.2)
        margin = cfg.pop("margin", 0.1)
        pi_failure = cfg.pop("pi_failure", 0.05)
        if delta > 0:
            budget = epsilon_budget(delta, *eta_values(data), margin=margin)
            base = QemConfig.from_budget(budget, K, pi_failure=pi_failure, seed=algo_seed)
        else:
            base = QemConfig(K, delta=0.0, eps1=0.0, seed=algo_seed)
        # explicit entries (eps1, channels, n_pi_samples, ...) override the budget
        qcfg = replace(base, **cfg)
        res = run_qem_emulation(data, init, qcfg)
        return res.labels, res.loglik_trace[-1], res.iterations, res
    if algorithm in ("kmeans", "delta_kmeans"):
        max_iters = cfg.get("max_iters", 100)
        if algorithm == "kmeans":
            res = run_kmeans(data, init.means, max_iters=max_iters, tol=cfg.get("tol", 0.0), seed=algo_seed)
        else:
            res = run_delta_kmeans(
                data,
                init.means,
                delta=cfg.get("delta", 0.2),
                noise_var=cfg.get("noise_var", 1e-4),
                max_iters=max_iters,
                seed=algo_seed,
            )
        return res.assignment.labels, kmeans_log_likelihood(data, res.centroids), res.iterations, res
    raise ConfigError(f"unknown algorithm {algorithm!r}")


def _run_trial(args) -> TrialOutcome:
    data, config, trial = args
    init_seed, algo_seed = _trial_seeds(config.seed, trial)
    labels, loglik, iters, _ = fit_algorithm(data, config.algorithm, config.K, config.algo_config, init_seed, algo_seed)
    rate = success_rate(labels, data.true_labels, config.K)
    return TrialOutcome(trial, rate, float(loglik), int(iters), [init_seed, algo_seed], int(np.sum(labels < 0)))


def run_benchmark(config: ExperimentConfig, data: Optional[Dataset] = None):
    """Run ``config.trials`` independent fits and return (best, all outcomes).

    Trial t draws its seeds from SeedSequence([config.seed, t]). The best
    outcome is the highest success rate, earliest trial on ties.
    """
    data = data if data is not None else config.load_data()
    if data.true_labels is None:
        raise ConfigError("benchmark data needs ground-truth labels")
    jobs = [(data, config, t) for t in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_run_trial, jobs))
    else:
        outcomes = [_run_trial(job) for job in jobs]
    outcomes.sort(key=lambda o: o.trial)
    best = max(outcomes, key=lambda o: (o.success_rate, -o.trial))
    if config.output_path:
        write_benchmark(config, best, outcomes, config.output_path)
    return best, outcomes


def write_benchmark(config: ExperimentConfig, best: TrialOutcome, outcomes, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"config": asdict(config), "best": asdict(best), "trials": [asdict(o) for o in outcomes]}
    path.with_suffix(".json").write_text(json.dumps(payload, indent=2), encoding="utf-8")
    with open(path.with_suffix(".csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["trial", "success_rate", "final_loglik", "iterations", "discarded"])
        for o in outcomes:
            writer.writerow([o.trial, repr(o.success_rate), repr(o.final_loglik), o.iterations, o.discarded])


def delta_sweep(deltas: Sequence[float], base_config: ExperimentConfig, data: Optional[Dataset] = None):
    """Best success rate per delta; returns a list of (delta, rate) rows."""
    if any(d < 0 for d in deltas):
        raise ConfigError("deltas must be >= 0")
    data = data if data is not None else base_config.load_data()
    rows = []
    for delta in deltas:
        cfg = ExperimentConfig(**{**asdict(base_config), "output_path": None})
        cfg.algo_config = {**base_config.algo_config, "delta": float(delta)}
        best, _ = run_benchmark(cfg, data)
        logger.info("delta=%g best=%.4f", delta, best.success_rate)
        rows.append((float(delta), best.success_rate))
    return rows


# ---------------------------------------------------------------------------
# plot data


def ellipse_points(mean, cov, n: int = 100) -> np.ndarray:
    """Points mu + sqrt(s1) e1 cos(t) + sqrt(s2) e2 sin(t) for t in [0, 2 pi)."""
    vals, vecs = np.linalg.eigh(np.asarray(cov, dtype=float))
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return (
        np.asarray(mean, dtype=float)
        + np.sqrt(vals[0]) * np.outer(np.cos(t), vecs[:, 0])
        + np.sqrt(vals[1]) * np.outer(np.sin(t), vecs[:, 1])
    )


def _as_rows(table) -> list[tuple[float, float]]:
    arr = np.asarray(table, dtype=float)
    if arr.size == 0:
        return []
    if arr.ndim == 1:
        return [(float(i), float(v)) for i, v in enumerate(arr)]
    return [(float(a), float(b)) for a, b in arr[:, :2]]


def emit_plot_data(table, path, header=("x", "y"), svg_path=None, mode: str = "line") -> Path:
    """Write a two-column CSV (and optionally an SVG chart) for a trace or table.

    A 1-D input is treated as a trace and indexed from 0.
    """
    rows = _as_rows(table)
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([repr(a), repr(b)] for a, b in rows)
    if svg_path is not None:
        Path(svg_path).write_text(render_svg([rows], [mode]), encoding="utf-8")
    return path


def render_svg(series: list, modes=None, width: int = 480, height: int = 360) -> str:
    """Minimal deterministic SVG: each series drawn as a polyline or a point cloud."""
    modes = list(modes) if modes is not None else ["line"] * len(series)
    pts = [p for s in series for p in s]
    pad = 20
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">']
    if pts:
        xs, ys = zip(*pts)
        x0, y0 = min(xs), min(ys)
        sx = (width - 2 * pad) / ((max(xs) - x0) or 1.0)
        sy = (height - 2 * pad) / ((max(ys) - y0) or 1.0)
        colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
        for i, (s, mode) in enumerate(zip(series, modes)):
            color = colors[i % len(colors)]
            xy = [(pad + (x - x0) * sx, height - pad - (y - y0) * sy) for x, y in s]
            if mode == "scatter":
                out.extend(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="1.5" fill="{color}"/>' for x, y in xy)
            else:
                coords = " ".join(f"{x:.3f},{y:.3f}" for x, y in xy)
                out.append(f'<polyline fill="none" stroke="{color}" points="{coords}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def scatter_with_ellipses(data: Dataset, params: GmmParams, svg_path, n: int = 100) -> None:
    """Data cloud plus one closed 1-sigma ellipse per fitted component (2-D only)."""
    series = [[tuple(p) for p in data.points]]
    for k in range(params.K):
        e = [tuple(p) for p in ellipse_points(params.means[k], params.covariances[k], n)]
        series.append(e + [e[0]])
    modes = ["scatter"] + ["line"] * params.K
    Path(svg_path).write_text(render_svg(series, modes), encoding="utf-8")
