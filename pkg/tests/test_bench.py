import csv
import json

import numpy as np
import pytest

from qemlab.bench import (
    EXAMPLE_1,
    ExperimentConfig,
    TrialOutcome,
    delta_sweep,
    ellipse_points,
    emit_plot_data,
    generate_example,
    generate_example1,
    generate_example2,
    render_svg,
    run_benchmark,
    scatter_with_ellipses,
    success_rate,
)
from qemlab.cli import main
from qemlab.core import ConfigError, Dataset, GmmParams
from qemlab.io import read_dataset_csv, read_params_json, write_dataset_csv, write_params_json


# generators


@pytest.mark.parametrize("gen", [generate_example1, generate_example2])
def test_generator_deterministic(gen):
    a, b = gen(200, seed=5), gen(200, seed=5)
    np.testing.assert_array_equal(a.points, b.points)
    np.testing.assert_array_equal(a.true_labels, b.true_labels)


@pytest.mark.parametrize("gen, mean", [(generate_example1, [0.3, 0.0]), (generate_example2, [0.0, -0.5])])
def test_generator_component_mean_clt(gen, mean):
    data = gen(100_000, seed=1)
    first = data.points[data.true_labels == 0]
    # 3 sigma / sqrt(n) with unit marginal variances and about half the points
    assert np.max(np.abs(first.mean(0) - mean)) < 0.02


@pytest.mark.parametrize("gen, share", [(generate_example1, 0.5), (generate_example2, 0.7)])
def test_generator_label_proportions(gen, share):
    data = gen(1000, seed=2)
    assert abs(np.mean(data.true_labels == 0) - share) < 0.05


def test_generator_aliases_and_errors():
    np.testing.assert_array_equal(generate_example("1", 10, 0).points, generate_example("I", 10, 0).points)
    with pytest.raises(ConfigError):
        generate_example("III", 10, 0)
    with pytest.raises(ValueError):
        generate_example1(0)


# success rate


def test_success_rate_identity_and_swap():
    truth = np.array([0, 1, 1, 0, 1])
    assert success_rate(truth, truth, 2) == 1.0
    assert success_rate(1 - truth, truth, 2) == 1.0


def test_success_rate_half_correct():
    truth = np.array([0, 0, 1, 1, 2, 2])
    pred = np.array([0, 1, 1, 2, 2, 0])
    assert success_rate(pred, truth, 3) == 0.5


def test_success_rate_discards_count_as_wrong():
    assert success_rate(np.array([0, -1, 1, -1]), np.array([0, 0, 1, 1]), 2) == 0.5


def test_success_rate_length_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        success_rate(np.zeros(3, dtype=int), np.zeros(4, dtype=int), 2)


def test_success_rate_dominates_identity_matching():
    rng = np.random.default_rng(3)
    for K in (2, 3, 5, 10):
        truth = rng.integers(0, K, 200)
        pred = rng.integers(0, K, 200)
        assert success_rate(pred, truth, K) >= np.mean(pred == truth)


def test_success_rate_large_k_matches_permutation_structure():
    rng = np.random.default_rng(4)
    truth = rng.integers(0, 10, 500)
    perm = rng.permutation(10)
    assert success_rate(perm[truth], truth, 10) == 1.0


# benchmark runner


def small_config(**kw):
    base = dict(example="I", algorithm="kmeans", trials=4, n=200, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


def test_single_trial_best_is_the_outcome():
    best, outcomes = run_benchmark(small_config(trials=1))
    assert outcomes == [best]


def test_benchmark_reproducible():
    a = run_benchmark(small_config(algorithm="delta_em", algo_config={"max_iters": 15}))
    b = run_benchmark(small_config(algorithm="delta_em", algo_config={"max_iters": 15}))
    assert a == b


def test_best_nondecreasing_in_trials():
    rates = [run_benchmark(small_config(trials=t))[0].success_rate for t in (1, 3, 6)]
    assert rates == sorted(rates)


def test_benchmark_writes_json_and_csv(tmp_path):
    out = tmp_path / "res" / "bench"
    best, outcomes = run_benchmark(small_config(output_path=str(out)))
    payload = json.loads(out.with_suffix(".json").read_text())
    assert payload["best"]["success_rate"] == best.success_rate
    assert [t["trial"] for t in payload["trials"]] == list(range(4))
    rows = list(csv.reader(out.with_suffix(".csv").open()))
    assert rows[0][:2] == ["trial", "success_rate"] and len(rows) == 5


@pytest.mark.parametrize("algorithm", ["em", "classification_em", "delta_kmeans", "qem_emulation"])
def test_every_algorithm_runs(algorithm):
    best, _ = run_benchmark(small_config(algorithm=algorithm, trials=1, algo_config={"max_iters": 5}))
    assert 0.0 <= best.success_rate <= 1.0


def test_config_validation():
    with pytest.raises(ConfigError):
        small_config(trials=0)
    with pytest.raises(ConfigError):
        small_config(algorithm="annealing")
    assert ExperimentConfig.from_dict({"algorithm": "delta-em"}).algorithm == "delta_em"


def test_trial_outcome_range():
    with pytest.raises(ValueError):
        TrialOutcome(0, 1.5, 0.0, 1, [0, 0])


def test_sweep_single_delta_single_row():
    rows = delta_sweep([0.2], small_config(algorithm="delta_em", trials=2, algo_config={"max_iters": 10}))
    assert len(rows) == 1 and rows[0][0] == 0.2


def test_sweep_rejects_negative_delta():
    with pytest.raises(ConfigError):
        delta_sweep([-1.0], small_config())


# plot data


def test_emit_plot_data_empty_is_header_only(tmp_path):
    path = emit_plot_data([], tmp_path / "e.csv")
    assert path.read_text() == "x,y\n"


def test_emit_plot_data_trace_rows(tmp_path):
    path = emit_plot_data([-5.0, -4.0, -3.5, -3.4, -3.39], tmp_path / "t.csv", header=("iter", "loglik"))
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,loglik" and len(lines) == 6


def test_emit_plot_data_deterministic_bytes(tmp_path):
    table = [(0.05, 0.94), (0.4, 0.95), (16.0, 0.55)]
    a = emit_plot_data(table, tmp_path / "a.csv", svg_path=tmp_path / "a.svg")
    b = emit_plot_data(table, tmp_path / "b.csv", svg_path=tmp_path / "b.svg")
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_ellipse_matches_eigen_oracle():
    cov = EXAMPLE_1.covariances[0]
    mean = EXAMPLE_1.means[0]
    pts = ellipse_points(mean, cov, 8)
    # eigenpairs of [[1, r], [r, 1]]: 1 - r along (1, -1), 1 + r along (1, 1)
    e1, e2 = np.array([1.0, -1.0]) / np.sqrt(2), np.array([1.0, 1.0]) / np.sqrt(2)
    s1, s2 = 1 - 0.98, 1 + 0.98
    for t, p in zip(np.linspace(0, 2 * np.pi, 8, endpoint=False), pts):
        # eigenvectors are defined up to sign, so accept either orientation per axis
        candidates = [mean + a * np.sqrt(s1) * e1 * np.cos(t) + b * np.sqrt(s2) * e2 * np.sin(t)
                      for a in (1, -1) for b in (1, -1)]
        assert min(np.linalg.norm(p - q) for q in candidates) < 1e-12


def test_ellipse_points_lie_on_one_sigma_contour():
    cov = np.array([[2.0, 0.3], [0.3, 0.5]])
    pts = ellipse_points([1.0, -1.0], cov, 50) - [1.0, -1.0]
    np.testing.assert_allclose(np.einsum("ni,ij,nj->n", pts, np.linalg.inv(cov), pts), 1.0, atol=1e-12)


def test_scatter_svg(tmp_path):
    data = generate_example1(50, seed=0)
    scatter_with_ellipses(data, EXAMPLE_1, tmp_path / "s.svg", n=20)
    text = (tmp_path / "s.svg").read_text()
    assert text.count("<circle") == 50 and text.count("<polyline") == 2
    assert render_svg([[]]).startswith("<svg")


# io round trips


def test_dataset_csv_round_trip(tmp_path):
    data = generate_example2(40, seed=6)
    write_dataset_csv(data, tmp_path / "d.csv")
    back = read_dataset_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.points, data.points)
    np.testing.assert_array_equal(back.true_labels, data.true_labels)
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "x1,x2,label"


def test_unlabeled_csv_round_trip(tmp_path):
    data = Dataset([[1.0, 2.0, 3.0]])
    write_dataset_csv(data, tmp_path / "u.csv")
    back = read_dataset_csv(tmp_path / "u.csv")
    assert back.true_labels is None and back.d == 3


def test_params_json_round_trip(tmp_path):
    write_params_json(EXAMPLE_1, tmp_path / "p.json")
    back = read_params_json(tmp_path / "p.json")
    np.testing.assert_array_equal(back.covariances, EXAMPLE_1.covariances)
    assert isinstance(back, GmmParams)


# command line


def test_cli_generate_fit_cost(tmp_path, capsys):
    data = tmp_path / "d.csv"
    assert main(["generate", "--example", "1", "--n", "120", "--seed", "4", "--out", str(data)]) == 0
    assert read_dataset_csv(data).N == 120
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"max_iters": 10}))
    out = tmp_path / "fit.json"
    assert main(["fit", "--algo", "delta-em", "--config", str(cfg), "--data", str(data), "--out", str(out)]) == 0
    assert 0 <= json.loads(out.read_text())["success_rate"] <= 1
    capsys.readouterr()
    assert main(["cost", "--data", str(data), "--delta", "0.2"]) == 0
    assert "term_pi_itemized" in capsys.readouterr().out


def test_cli_bench_and_sweep(tmp_path, capsys):
    cfg = tmp_path / "b.json"
    cfg.write_text(json.dumps({"example": "I", "algorithm": "kmeans", "trials": 2, "n": 100,
                               "output_path": str(tmp_path / "out")}))
    assert main(["bench", "--config", str(cfg), "--seed", "1"]) == 0
    assert (tmp_path / "out.json").exists()
    sweep_cfg = tmp_path / "s.json"
    sweep_cfg.write_text(json.dumps({"n": 100, "algo_config": {"max_iters": 5}}))
    assert main(["sweep", "--deltas", "0.1,0.4", "--config", str(sweep_cfg), "--trials", "1",
                 "--out", str(tmp_path / "sw.csv")]) == 0
    assert len((tmp_path / "sw.csv").read_text().splitlines()) == 3


def test_cli_config_error_exit_code(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"trials": 0}))
    assert main(["bench", "--config", str(cfg)]) == 2
    assert main(["bench", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["sweep", "--deltas", "a,b"]) == 2


def test_cli_numeric_failure_exit_code(tmp_path):
    data = tmp_path / "flat.csv"
    data.write_text("x1,x2\n1,1\n1,1\n1,1\n1,1\n")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"cov_floor": 0.0}))
    assert main(["fit", "--algo", "em", "--config", str(cfg), "--data", str(data)]) == 3
