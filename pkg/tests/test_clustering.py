from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_kmeans_inertia, dense_knee, three_blobs
from infraclust.clustering import (Clustering, NoKneeWarning, Partition, build_clustering, cluster_features,
                                   elbow_k, inertia_curve, kmeans, kneedle, membership_indicator,
                                   read_assignments_csv, write_assignments_csv)
from infraclust.features import assemble_feature_matrix, compute_component_features
from infraclust.hazard import Scenario


def test_kmeans_trivial_cases():
    x = np.random.default_rng(0).normal(size=(7, 3))
    one = kmeans(x, 1)
    assert one.inertia == pytest.approx(((x - x.mean(0)) ** 2).sum())
    assert set(one.labels.tolist()) == {0}
    full = kmeans(x, 7)
    assert full.inertia == pytest.approx(0.0, abs=1e-12)
    assert sorted(full.labels.tolist()) == list(range(7))
    with pytest.raises(ValueError):
        kmeans(x, 8)
    with pytest.raises(ValueError):
        kmeans(x, 0)
    with pytest.raises(ValueError):
        kmeans(np.zeros((0, 2)), 1)


@pytest.mark.parametrize("seed", range(6))
def test_kmeans_against_enumerated_optimum(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(8, 2))
    for k in (2, 3):
        # Lloyd is a local method: never below the global optimum
        assert kmeans(x, k, seed=seed).inertia >= brute_kmeans_inertia(x, k) - 1e-9
    # well-separated groups: the optimum is found
    sep = np.vstack([rng.normal(c, 0.3, (3, 2)) for c in ([0, 0], [6, 0])] + [rng.normal([3, 6], 0.3, (2, 2))])
    assert kmeans(sep, 3, seed=seed).inertia == pytest.approx(brute_kmeans_inertia(sep, 3), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 6))
def test_lloyd_inertia_never_rises(seed, k):
    x = np.random.default_rng(seed).normal(size=(25, 3))
    res = kmeans(x, k, seed=seed, restarts=2)
    assert all(b <= a * (1 + 1e-12) + 1e-12 for a, b in zip(res.history, res.history[1:]))
    assert res.inertia <= res.history[-1] * (1 + 1e-12) + 1e-12
    assert len(set(res.labels.tolist())) == k


def test_kmeans_deterministic():
    x = three_blobs(4)
    a, b = kmeans(x, 3, seed=9), kmeans(x, 3, seed=9)
    assert np.array_equal(a.labels, b.labels) and a.inertia == b.inertia


def test_three_blobs_elbow():
    for seed in range(20):
        k, inertias = elbow_k(three_blobs(seed), range(1, 9), seed=seed)
        assert k == 3
        assert all(b <= a + 1e-9 for a, b in zip(inertias, inertias[1:]))


def test_single_blob_elbow_is_small():
    # an isotropic Gaussian has no true elbow; the detector still reports a
    # knee in the steep early part of the curve rather than a large k
    for seed in range(5):
        x = np.random.default_rng(seed).normal(size=(60, 2))
        k, _ = elbow_k(x, range(1, 9), seed=seed)
        assert 2 <= k <= 4


def test_elbow_edge_cases():
    with pytest.raises(ValueError):
        elbow_k(np.random.default_rng(0).normal(size=(10, 2)), [1, 2])
    assert elbow_k(np.zeros((1, 2)), range(1, 5))[0] == 1


def test_elbow_linear_curve_falls_back():
    # points on a line at geometric spacing give no knee when the inertia curve is straight;
    # exercised directly through kneedle, then via the warning path with a patched curve
    assert kneedle(range(1, 9), [8 - k for k in range(1, 9)], direction="decreasing", curvature="convex") is None
    import infraclust.clustering as mod
    orig = mod.inertia_curve
    mod.inertia_curve = lambda x, ks, seed=0, restarts=10: [100.0 - 10 * k for k in ks]
    try:
        with pytest.warns(NoKneeWarning):
            k, _ = elbow_k(np.random.default_rng(0).normal(size=(10, 2)), range(1, 8))
        assert k == 1
    finally:
        mod.inertia_curve = orig


def test_kneedle_matches_dense_oracle():
    xs = np.arange(0, 5.0001, 0.25)
    knee = kneedle(xs, 1 - np.exp(-xs))
    want = dense_knee(lambda x: 1 - np.exp(-x), 0.0, 5.0)
    assert abs(knee - want) <= 0.25 + 1e-12


def test_kneedle_null_and_errors():
    assert kneedle([1, 2, 3, 4], [1, 2, 3, 4]) is None
    assert kneedle([1, 2, 3], [5, 5, 5]) is None
    with pytest.raises(ValueError):
        kneedle([1, 2], [1, 2])
    with pytest.raises(ValueError):
        kneedle([1, 3, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        kneedle([1, 2, 3], [1, 2, 3], direction="sideways")


def test_kneedle_orientation_transform():
    ks = np.arange(1, 11, dtype=float)
    inertia = 100.0 / ks  # decreasing convex
    direct = kneedle(ks, inertia, direction="decreasing", curvature="convex")
    # negating a decreasing convex curve makes it increasing concave
    manual = kneedle(ks, -inertia)
    assert direct is not None and direct == manual


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.1, 100), b=st.floats(-50, 50), c=st.floats(0.1, 100), d=st.floats(-50, 50),
       rate=st.floats(0.3, 3.0))
def test_kneedle_affine_invariance(a, b, c, d, rate):
    xs = np.linspace(0, 5, 15)
    ys = 1 - np.exp(-rate * xs)
    base = kneedle(xs, ys)
    moved = kneedle(a * xs + b, c * ys + d)
    if base is None:
        assert moved is None
    else:
        assert moved == pytest.approx(a * base + b, rel=1e-9, abs=1e-9)


def test_cluster_features_examples():
    part = Partition("water", "link", ("water:link:a", "water:link:b", "water:link:c"), (0, 0, 1))
    cl = Clustering([part])
    assert cluster_features(Scenario.from_components("s", []), cl) == {"water:link:c0": 0, "water:link:c1": 0}
    scen = Scenario.from_components("s", ["water:link:a", "water:link:b", "water:link:c", "power:link:x"])
    assert cluster_features(scen, cl) == {"water:link:c0": 2, "water:link:c1": 1}
    assert membership_indicator(cl, "water:link:c", "water:link:c1") == 1
    assert membership_indicator(cl, "water:link:c", "water:link:c0") == 0
    with pytest.raises(KeyError):
        cl.cluster_of("water:link:zzz")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=0, max_size=6, unique=True), st.integers(0, 3))
def test_cluster_features_sum_to_failures(picks, seed):
    ids = tuple(f"water:link:l{i}" for i in range(6))
    labels = tuple(int(v) for v in np.random.default_rng(seed).integers(0, 3, 6))
    relabel = {v: k for k, v in enumerate(sorted(set(labels)))}
    cl = Clustering([Partition("water", "link", ids, tuple(relabel[v] for v in labels))])
    feats = cluster_features(Scenario.from_components("s", [ids[i] for i in picks]), cl)
    assert sum(feats.values()) == len(picks)


def test_assignments_round_trip(tmp_path, small_testbed):
    mats = {}
    for system in ("water", "power"):
        feats = compute_component_features(small_testbed.system(system))
        mats[(system, "link")] = assemble_feature_matrix(feats["link"])
    cl = build_clustering(mats, {("water", "link"): 3, ("power", "link"): 2}, seed=1)
    assert cl.counts() == {"power": 2, "water": 3}
    assert cl.total == 5
    path = tmp_path / "clusters.csv"
    write_assignments_csv(cl, path)
    back = read_assignments_csv(path)
    assert back.cluster_ids == cl.cluster_ids
    for p in cl.partitions:
        for cid in p.ids:
            assert back.cluster_of(cid) == cl.cluster_of(cid)


def test_inertia_curve_non_increasing():
    x = three_blobs(1)
    curve = inertia_curve(x, range(1, 9), seed=0)
    assert all(b <= a + 1e-9 for a, b in zip(curve, curve[1:]))


def test_kneedle_takes_the_largest_difference():
    # a noisy plateau with a late bump: the knee stays at the sharp early bend
    xs = [3, 6, 9, 12, 15, 18, 21]
    ys = [0.60, 0.84, 0.85, 0.875, 0.868, 0.86, 0.873]
    assert kneedle(xs, ys) == 6
