import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import best_two_partition, matching_distance, nearest_center
from pms2l.clustering import (
    Clusterer,
    Partition,
    assign,
    estimate_bounded_difference,
    estimate_stability,
    fit_kmeans,
    kmeans_plusplus,
    lloyd,
    matching_distance_bruteforce,
    matching_distance_labels,
    minimal_matching_distance,
)
from pms2l.data import Sample, make_synthetic_blobs, to_matrix
from pms2l.errors import ArgumentError, ConfigurationError


def pts(rows):
    return [Sample.from_dense(r) for r in rows]


def test_two_obvious_groups_match_exhaustive_optimum():
    rows = [(0, 0), (0, 1), (10, 0), (10, 1)]
    part = fit_kmeans(pts(rows), Clusterer(2, seed=0), dimension=2)
    groups = {frozenset(np.flatnonzero(part.assign == g).tolist()) for g in range(2)}
    _, best = best_two_partition(rows)
    assert groups == best == {frozenset({0, 1}), frozenset({2, 3})}


def test_single_cluster_center_is_mean():
    rows = np.random.default_rng(1).normal(size=(9, 3))
    part = fit_kmeans(rows, Clusterer(1))
    assert (part.assign == 0).all()
    np.testing.assert_allclose(part.centers[0], rows.mean(axis=0))


def test_one_cluster_per_point():
    rows = np.random.default_rng(2).normal(size=(6, 2))
    part = fit_kmeans(rows, Clusterer(6, seed=3))
    assert sorted(part.assign.tolist()) == list(range(6))
    sse = sum(((rows[i] - part.centers[part.assign[i]]) ** 2).sum() for i in range(6))
    assert sse == 0.0


def test_too_few_points():
    with pytest.raises(ConfigurationError):
        fit_kmeans(np.zeros((2, 2)), Clusterer(3))


def test_duplicate_points_still_fill_every_cluster():
    rows = np.zeros((10, 2))
    rows[7:] = 1.0
    part = fit_kmeans(rows, Clusterer(4, seed=0))
    assert part.sizes().min() >= 1


def test_kmeans_deterministic_per_seed():
    X = np.random.default_rng(4).normal(size=(80, 3))
    a = fit_kmeans(X, Clusterer(5, seed=7))
    b = fit_kmeans(X, Clusterer(5, seed=7))
    assert np.array_equal(a.assign, b.assign) and np.array_equal(a.centers, b.centers)


def test_sparse_and_dense_inputs_agree():
    pool = make_synthetic_blobs(3, 20, 6.0, 1.0, seed=8)
    X = to_matrix(pool.samples, 2)
    a = fit_kmeans(X, Clusterer(3, seed=1))
    b = fit_kmeans(X.toarray(), Clusterer(3, seed=1))
    assert np.array_equal(a.assign, b.assign)


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_lloyd_objective_never_increases(seed, G):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 2))
    init = kmeans_plusplus(X, G, rng)
    _, _, history = lloyd(X, init, 50, 1e-9)
    assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))


def test_assign_center_and_tie():
    centers = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 5.0], [-1.0, 0.0]])
    part = Partition(4, [0, 1, 2, 3], centers)
    assert assign(part, Sample.from_dense([5.0, 5.0])) == 2
    # the origin is equidistant to centers 1 and 3
    tie = Partition(4, [0, 1, 2, 3], np.array([[9.0, 9.0], [1.0, 0.0], [5.0, 5.0], [-1.0, 0.0]]))
    assert assign(tie, Sample.from_dense([0.0, 0.0])) == 1


def test_assign_matches_linear_scan():
    rng = np.random.default_rng(5)
    centers = rng.normal(size=(7, 4))
    part = Partition(7, np.arange(7), centers)
    for _ in range(200):
        x = rng.normal(size=4)
        assert assign(part, Sample.from_dense(x)) == nearest_center(x, centers)


def test_assign_needs_centers():
    with pytest.raises(ConfigurationError):
        assign(Partition(2, [0, 1]), Sample([0], [1.0]))


@pytest.mark.parametrize(
    "a, b, expected",
    [([0, 0, 1, 1], [0, 0, 1, 1], 0.0), ([0, 0, 1, 1], [1, 1, 0, 0], 0.0), ([0, 0, 1, 1], [0, 1, 0, 1], 0.5)],
)
def test_matching_distance_examples(a, b, expected):
    assert matching_distance_labels(a, b) == expected
    assert matching_distance(a, b, 2) == expected


def test_minimal_matching_distance_uses_eval_set():
    a = Partition(2, [0, 1], np.array([[0.0], [10.0]]))
    b = Partition(2, [0, 1], np.array([[10.0], [0.0]]))
    ev = pts([[0.0], [1.0], [9.0]])
    assert minimal_matching_distance(a, b, ev) == 0.0
    c = Partition(2, [0, 1], np.array([[0.0], [0.8]]))
    assert minimal_matching_distance(a, c, ev) == pytest.approx(1 / 3)


def test_padding_for_unequal_cluster_counts():
    assert matching_distance_labels([0, 1, 2, 2], [0, 1, 1, 1]) == 0.25


def test_empty_eval_set_rejected():
    a = Partition(1, [0], np.zeros((1, 1)))
    with pytest.raises(ArgumentError):
        minimal_matching_distance(a, a, [])


labels_st = st.lists(st.integers(0, 4), min_size=1, max_size=12)


@given(st.data())
def test_solver_equals_permutation_scan(data):
    n = data.draw(st.integers(1, 15))
    G = data.draw(st.integers(1, 5))
    a = data.draw(st.lists(st.integers(0, G - 1), min_size=n, max_size=n))
    b = data.draw(st.lists(st.integers(0, G - 1), min_size=n, max_size=n))
    assert matching_distance_labels(a, b, G) == matching_distance(a, b, G)
    assert matching_distance_bruteforce(a, b, G) == matching_distance(a, b, G)


@given(st.data())
def test_relabeling_invariance(data):
    n = data.draw(st.integers(1, 20))
    a = data.draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
    b = data.draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
    sigma = data.draw(st.permutations(range(4)))
    relabeled = [sigma[x] for x in b]
    assert matching_distance_labels(a, relabeled, 4) == matching_distance_labels(a, b, 4)


def test_constant_clusterer_has_zero_constant():
    X = np.random.default_rng(0).normal(size=(50, 2))
    assert estimate_bounded_difference(Clusterer(1), X, 20, 10, 5, seed=1) == 0.0


def test_bounded_difference_rejects_bad_sizes():
    X = np.zeros((10, 1))
    with pytest.raises(ArgumentError):
        estimate_bounded_difference(Clusterer(1), X, 5, 5, 3, 0)
    with pytest.raises(ArgumentError):
        estimate_bounded_difference(Clusterer(1), X, 3, 3, 0, 0)


def test_separated_blobs_with_true_k_are_stable():
    pool = make_synthetic_blobs(3, 150, 12.0, 1.0, seed=2)
    X = to_matrix(pool.samples, 2)
    L = estimate_bounded_difference(Clusterer(3, seed=0), X, 200, 200, 20, seed=3)
    assert L < 0.5


def test_stability_full_sample_reproduces_reference():
    pool = make_synthetic_blobs(3, 30, 8.0, 1.0, seed=4)
    X = to_matrix(pool.samples, 2)
    est = estimate_stability(Clusterer(3, seed=0), X, X.shape[0], X, 3, seed=0, L_hat=0.0)
    assert est.delta_hat == 0.0


def test_stability_half_sample_on_separated_blobs():
    pool = make_synthetic_blobs(3, 100, 12.0, 1.0, seed=6)
    X = to_matrix(pool.samples, 2)
    est = estimate_stability(Clusterer(3, seed=0), X, 150, X, 10, seed=2)
    assert 0.0 <= est.delta_hat < 0.05
    assert est.L_hat >= 0.0
    assert est.to_json() == {"L_hat": est.L_hat, "delta_hat": est.delta_hat, "trials": 10}


def test_partition_json_round_trip():
    part = fit_kmeans(np.random.default_rng(0).normal(size=(10, 3)), Clusterer(3))
    back = Partition.from_json(part.to_json())
    assert np.array_equal(back.assign, part.assign) and np.array_equal(back.centers, part.centers)
