"""Command-line entry point ``lab``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .bench import (
    ExperimentConfig,
    _trial_seeds,
    delta_sweep,
    emit_plot_data,
    fit_algorithm,
    generate_example,
    run_benchmark,
    success_rate,
)
from .core import ConfigError, CovarianceError, DegenerateWeightsError
from .cost import DataMatrices, epsilon_budget, eta_values, qem_runtime_estimate
from .io import read_dataset_csv, write_dataset_csv

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _load_json(path) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return obj


def _read_data(path):
    try:
        return read_dataset_csv(path)
    except OSError as exc:
        raise ConfigError(f"cannot read data {path}: {exc}") from exc


def _emit(obj, out) -> None:
    text = json.dumps(obj, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_generate(args) -> None:
    data = generate_example(args.example, args.n, args.seed)
    write_dataset_csv(data, args.out)
    print(f"wrote {data.N} points to {args.out}")


def cmd_fit(args) -> None:
    cfg = _load_json(args.config)
    K = int(cfg.pop("K", args.K))
    data = _read_data(args.data)
    init_seed, algo_seed = _trial_seeds(args.seed, 0)
    labels, loglik, iters, res = fit_algorithm(data, args.algo.replace("-", "_"), K, cfg, init_seed, algo_seed)
    out = {"algorithm": args.algo, "K": K, "final_loglik": float(loglik), "iterations": int(iters)}
    if data.true_labels is not None:
        out["success_rate"] = success_rate(labels, data.true_labels, K)
    out["result"] = res.to_dict()
    _emit(out, args.out)


def cmd_bench(args) -> None:
    obj = _load_json(args.config)
    if args.seed is not None:
        obj["seed"] = args.seed
    config = ExperimentConfig.from_dict(obj)
    best, outcomes = run_benchmark(config)
    print(f"best success rate {best.success_rate:.4f} (trial {best.trial} of {len(outcomes)})")
    if config.output_path:
        print(f"results in {Path(config.output_path).with_suffix('.json')}")


def _parse_deltas(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad delta list {text!r}") from exc
    if not values:
        raise ConfigError("empty delta list")
    return values


def cmd_sweep(args) -> None:
    obj = _load_json(args.config)
    obj.setdefault("algorithm", "delta_em")
    if args.seed is not None:
        obj["seed"] = args.seed
    if args.trials is not None:
        obj["trials"] = args.trials
    obj["output_path"] = None
    config = ExperimentConfig.from_dict(obj)
    rows = delta_sweep(_parse_deltas(args.deltas), config)
    print("delta,best_success_rate")
    for delta, rate in rows:
        print(f"{delta:g},{rate:.4f}")
    if args.out:
        emit_plot_data(rows, args.out, header=("delta", "best_success_rate"), svg_path=args.svg)


def cmd_cost(args) -> None:
    data = _read_data(args.data)
    budget = epsilon_budget(args.delta, *eta_values(data), margin=args.margin)
    report = qem_runtime_estimate(DataMatrices.from_points(data.points), args.K, budget)
    if args.json:
        _emit({"budget": asdict(budget), "report": report.to_dict()}, None)
        return
    width = max(len(k) for k in report.to_dict())
    for name, value in report.to_dict().items():
        print(f"{name:<{width}}  {value:.6g}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lab", description="Mixture-model EM benchmarks and cost estimates.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a synthetic example to CSV")
    p.add_argument("--example", default="1", help="1 or 2")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="run one fit on a CSV dataset")
    p.add_argument("--algo", required=True)
    p.add_argument("--config", help="JSON with algorithm settings (and optionally K)")
    p.add_argument("--data", required=True)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bench", help="multi-trial benchmark from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="best success rate per delta")
    p.add_argument("--deltas", required=True, help="comma-separated list")
    p.add_argument("--config")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV of (delta, rate) rows")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cost", help="per-iteration cost terms for a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--margin", type=float, default=0.1)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_cost)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (CovarianceError, DegenerateWeightsError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, TypeError, KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
