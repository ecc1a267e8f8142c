import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import lemma1_rhs
from pms2l.confident import ConfidentClusterSet, eta_from_stability, identify, predominant_classes
from pms2l.errors import ArgumentError, ConfigurationError


@pytest.mark.parametrize(
    "labels, kappa, expected",
    [([0, 0, 1, 2], 2, (0, 1)), ([5, 5, 5], 2, (5,)), ([0, 1], 2, (0, 1))],
)
def test_predominant_examples(labels, kappa, expected):
    assert predominant_classes(labels, kappa) == expected


def test_predominant_needs_labels():
    with pytest.raises(ArgumentError):
        predominant_classes([], 1)


def _eight_point_setup(eta):
    # cluster 0: labels 0,0,1 ; cluster 1: five labels of class 1
    lab_cluster = np.array([0, 0, 0, 1, 1, 1, 1, 1])
    labels = np.array([0, 0, 1, 1, 1, 1, 1, 1])
    return identify(lab_cluster, labels, np.array([0, 0, 1]), 2, 3, 1, eta)


def test_violation_within_level_is_kept():
    conf = _eight_point_setup(0.8)
    c0 = conf.by_id()[0]
    assert c0.predominant == (0,)
    assert c0.violation_mass == 0.125
    assert c0.unlabeled_count == 2


def test_violation_above_level_is_dropped():
    conf = _eight_point_setup(0.1)
    assert conf.ids == [1]
    assert conf.by_id()[1].violation_mass == 0.0


def test_pure_cluster_always_kept():
    conf = identify(np.zeros(4, int), np.full(4, 2), np.zeros(3, int), 1, 3, 1, 0.0)
    assert conf.ids == [0] and conf.clusters[0].violation_mass == 0.0


def test_clusters_without_labels_are_excluded():
    conf = identify(np.array([0, 0]), np.array([1, 1]), np.array([1, 1, 2]), 3, 3, 1, 10.0)
    assert conf.ids == [0]


def test_kappa_must_leave_a_competitor():
    with pytest.raises(ConfigurationError):
        identify(np.array([0]), np.array([0]), np.array([0]), 1, 2, 2, 0.1)


assignment_st = st.integers(1, 5).flatmap(
    lambda G: st.tuples(
        st.just(G),
        st.lists(st.tuples(st.integers(0, G - 1), st.integers(0, 3)), min_size=1, max_size=40),
        st.lists(st.integers(0, G - 1), max_size=40),
    )
)


@given(assignment_st, st.floats(0, 2), st.floats(0, 2))
def test_monotone_in_eta(case, e1, e2):
    G, lab, unl = case
    c, y = np.array([p[0] for p in lab]), np.array([p[1] for p in lab])
    lo, hi = sorted((e1, e2))
    small = set(identify(c, y, np.array(unl, dtype=int), G, 4, 2, lo).ids)
    large = set(identify(c, y, np.array(unl, dtype=int), G, 4, 2, hi).ids)
    assert small <= large


@given(assignment_st)
def test_monotone_in_kappa(case):
    G, lab, unl = case
    c, y = np.array([p[0] for p in lab]), np.array([p[1] for p in lab])
    u = np.array(unl, dtype=int)
    everything = 10.0 * G
    by_kappa = [identify(c, y, u, G, 4, k, everything).by_id() for k in (1, 2, 3)]
    for j in by_kappa[0]:
        masses = [m[j].violation_mass for m in by_kappa]
        assert masses[0] >= masses[1] >= masses[2]


@given(assignment_st, st.floats(0, 3))
def test_counts_add_up(case, eta):
    G, lab, unl = case
    c, y = np.array([p[0] for p in lab]), np.array([p[1] for p in lab])
    conf = identify(c, y, np.array(unl, dtype=int), G, 4, 2, eta)
    outside = int((~np.isin(c, conf.ids)).sum())
    assert conf.n_eta + outside == len(lab)
    assert conf.u_eta <= len(unl)
    assert all(cl.violation_mass <= eta / G for cl in conf.clusters)


@given(assignment_st)
def test_level_at_least_G_keeps_every_labeled_cluster(case):
    G, lab, unl = case
    c, y = np.array([p[0] for p in lab]), np.array([p[1] for p in lab])
    conf = identify(c, y, np.array(unl, dtype=int), G, 4, 1, float(G))
    assert conf.ids == sorted(set(c.tolist()))


def test_eta_from_stability_example():
    assert eta_from_stability(1.0, 100, 100, 0.05) == pytest.approx(0.2816, abs=5e-5)
    assert eta_from_stability(1.0, 100, 100, 0.05) == pytest.approx(lemma1_rhs(1.0, 100, 100, 0.05), rel=1e-14)


def test_eta_from_stability_limits():
    base = math.sqrt(math.log(40) / 200)
    assert eta_from_stability(0.0, 100, 100, 0.05) == pytest.approx(base, rel=1e-14)
    assert eta_from_stability(1.0, 100, 10**15, 0.05) == pytest.approx(base, rel=1e-6)


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.1, 2.0])
def test_eta_from_stability_rejects_delta(delta):
    with pytest.raises(ArgumentError):
        eta_from_stability(1.0, 10, 10, delta)


def test_json_round_trip():
    conf = _eight_point_setup(0.8)
    assert ConfidentClusterSet.from_json(conf.to_json()) == conf
    assert set(conf.to_json()["clusters"][0]) == {"id", "predominant", "n_eta_j", "u_eta_j", "violation_mass"}
