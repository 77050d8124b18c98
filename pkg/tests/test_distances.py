import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qemlab.bench import EXAMPLE_1, EXAMPLE_2
from qemlab.core import DISCARD, GmmParams, normalize_weights
from qemlab.distances import (
    EUCLIDEAN,
    DistanceRow,
    delta_neighbor_set,
    deterministic_label,
    deterministic_labels,
    distance_row,
    euclidean_matrix,
    gmm_distance_matrix,
    sample_neighbor_labels,
    squared_euclidean,
    squared_gmm_distance,
)
from qemlab.em import e_step
from qemlab.core import Dataset

rows = st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=8)


def random_params(rng, K, d):
    covs = []
    for _ in range(K):
        A = rng.standard_normal((d, d))
        covs.append(A @ A.T + 0.2 * np.eye(d))
    return GmmParams(normalize_weights(rng.random(K) + 0.05), rng.standard_normal((K, d)), covs)


def test_squared_euclidean_examples():
    assert squared_euclidean([1.5, -2.0], [1.5, -2.0]) == 0.0
    assert squared_euclidean([0, 0], [3, 4]) == 25.0


def test_squared_euclidean_loop_oracle():
    rng = np.random.default_rng(0)
    y, mu = rng.standard_normal(7), rng.standard_normal(7)
    total = 0.0
    for a, b in zip(y, mu):
        total += (a - b) * (a - b)
    assert squared_euclidean(y, mu) == pytest.approx(total, rel=1e-14)


def test_squared_euclidean_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        squared_euclidean([0, 0], [0, 0, 0])


def test_gmm_distance_reduces_to_euclidean():
    rng = np.random.default_rng(1)
    for K in (1, 2, 5):
        for _ in range(20):
            y, mu = rng.standard_normal(3), rng.standard_normal(3)
            got = squared_gmm_distance(y, 1.0 / K, mu, np.eye(3), K)
            assert got == pytest.approx(squared_euclidean(y, mu), abs=1e-12)


def test_gmm_distance_zero_at_mean_single_component():
    assert squared_gmm_distance([0.4, 2.0], 1.0, [0.4, 2.0], np.eye(2), 1) == pytest.approx(0.0, abs=1e-15)


def test_gmm_distance_example2_component2():
    got = squared_gmm_distance([0.0, 0.0], 0.3, EXAMPLE_2.means[1], EXAMPLE_2.covariances[1], 2)
    assert got == pytest.approx(-2.0 * math.log(0.6), abs=1e-12)


def test_gmm_distance_rejects_nonpositive_weight():
    with pytest.raises(ValueError):
        squared_gmm_distance([0, 0], 0.0, [0, 0], np.eye(2), 2)


def test_gmm_distance_rejects_indefinite_covariance():
    with pytest.raises(ValueError):
        squared_gmm_distance([0, 0], 0.5, [0, 0], np.diag([1.0, -1.0]), 2)


def test_distance_row_single_component():
    p = GmmParams([1.0], [[0.0, 0.0]], [np.eye(2)])
    assert len(distance_row([1.0, 1.0], p)) == 1


def test_distance_row_equal_components_constant():
    p = GmmParams([0.25] * 4, [[1.0, -1.0]] * 4, [np.diag([2.0, 0.5])] * 4)
    row = distance_row([0.3, 0.7], p).values
    assert np.ptp(row) == 0.0


def test_distance_row_example1_matches_per_component():
    row = distance_row([0.0, 0.0], EXAMPLE_1)
    expected = [
        squared_gmm_distance([0.0, 0.0], EXAMPLE_1.weights[k], EXAMPLE_1.means[k], EXAMPLE_1.covariances[k], 2)
        for k in range(2)
    ]
    np.testing.assert_allclose(row.values, expected, rtol=1e-13)


def test_distance_row_euclidean_metric():
    row = distance_row([0.0, 0.0], EXAMPLE_1, EUCLIDEAN)
    np.testing.assert_allclose(row.values, [0.09, 0.09])


def test_matrices_match_scalar_functions():
    rng = np.random.default_rng(2)
    p = random_params(rng, 3, 2)
    X = rng.standard_normal((15, 2))
    G = gmm_distance_matrix(X, p)
    E = euclidean_matrix(X, p.means)
    for i in range(15):
        for k in range(3):
            assert G[i, k] == pytest.approx(
                squared_gmm_distance(X[i], p.weights[k], p.means[k], p.covariances[k], 3), rel=1e-12, abs=1e-12
            )
            assert E[i, k] == pytest.approx(squared_euclidean(X[i], p.means[k]), rel=1e-12)


def test_neighbor_set_examples():
    assert delta_neighbor_set([1.0, 2.0], 0.2) == {0}
    assert delta_neighbor_set([1.0, 1.1], 0.2) == {0, 1}
    assert delta_neighbor_set(DistanceRow([3.0, -1.0, 7.0]), math.inf) == {0, 1, 2}


def test_neighbor_set_closed_boundary():
    assert delta_neighbor_set([0.0, 0.5], 0.5) == {0, 1}


def test_neighbor_set_negative_delta():
    with pytest.raises(ValueError):
        delta_neighbor_set([1.0], -0.1)


def test_deterministic_label_examples():
    assert deterministic_label([1.0, 2.0], 0.2) == 0
    assert deterministic_label([1.0, 1.3], 0.2) == DISCARD
    assert deterministic_label([5.0, 5.0, 9.0], 0.0) == DISCARD


def test_deterministic_labels_vectorized_matches_scalar():
    rng = np.random.default_rng(3)
    D = rng.integers(0, 6, size=(300, 4)).astype(float) * 0.25
    for delta in (0.0, 0.1, 0.25, 1.0):
        expected = [deterministic_label(r, delta) for r in D]
        np.testing.assert_array_equal(deterministic_labels(D, delta), expected)


@settings(max_examples=200, deadline=None)
@given(rows)
def test_neighbor_set_at_zero_is_argmin_set(values):
    v = np.array(values)
    assert delta_neighbor_set(v, 0.0) == set(np.flatnonzero(v == v.min()).tolist())


@settings(max_examples=200, deadline=None)
@given(rows, st.floats(0, 10), st.floats(0, 10))
def test_neighbor_set_nested(values, a, b):
    small, large = sorted((a, b))
    assert delta_neighbor_set(values, small) <= delta_neighbor_set(values, large)


@settings(max_examples=200, deadline=None)
@given(rows, st.floats(0, 5))
def test_deterministic_label_is_unique_argmin(values, delta):
    label = deterministic_label(values, delta)
    if label != DISCARD:
        v = np.array(values)
        assert label in delta_neighbor_set(v, delta)
        assert np.flatnonzero(v == v.min()).tolist() == [label]


def test_identity_uniform_assignment_reduction():
    rng = np.random.default_rng(4)
    K, d = 4, 3
    p = GmmParams(np.full(K, 1.0 / K), rng.standard_normal((K, d)), [np.eye(d)] * K)
    X = rng.standard_normal((500, d)) * 2
    np.testing.assert_array_equal(
        np.argmin(gmm_distance_matrix(X, p), axis=1), np.argmin(euclidean_matrix(X, p.means), axis=1)
    )


def test_argmin_distance_is_argmax_responsibility():
    rng = np.random.default_rng(5)
    for _ in range(20):
        p = random_params(rng, 3, 2)
        X = rng.standard_normal((200, 2)) * 2
        np.testing.assert_array_equal(
            np.argmin(gmm_distance_matrix(X, p), axis=1), np.argmax(e_step(Dataset(X), p), axis=1)
        )


def test_sampled_labels_stay_in_neighbor_sets():
    rng = np.random.default_rng(6)
    D = rng.standard_normal((400, 5))
    labels = sample_neighbor_labels(D, 0.7, rng)
    for row, k in zip(D, labels):
        assert k in delta_neighbor_set(row, 0.7)
