from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcgain.errors import DataError
from pcgain.kmeans import kmeans, nearest


def brute_force_inertia(points: np.ndarray, k: int) -> float:
    """Optimal k-means inertia by enumerating every labelling with all k clusters non-empty."""
    n = len(points)
    best = np.inf
    # fix point 0 in cluster 0 to halve the symmetric search
    for rest in itertools.product(range(k), repeat=n - 1):
        labels = np.array((0,) + rest)
        if len(np.unique(labels)) != k:
            continue
        total = 0.0
        for c in range(k):
            members = points[labels == c]
            total += ((members - members.mean(axis=0)) ** 2).sum()
        best = min(best, total)
    return best


def test_k1_is_mean_and_total_variance():
    pts = np.random.default_rng(0).normal(size=(30, 3))
    km = kmeans(pts, 1, seed=0)
    np.testing.assert_allclose(km.centroids[0], pts.mean(axis=0))
    assert km.inertia == pytest.approx(pts.var(axis=0).sum() * len(pts))


def test_two_blobs_separated():
    rng = np.random.default_rng(1)
    a = rng.normal(0.0, 0.05, size=(6, 2))
    b = rng.normal(10.0, 0.05, size=(6, 2))
    pts = np.vstack([a, b])
    km = kmeans(pts, 2, seed=3)
    assert len(set(km.assignments[:6])) == 1 and len(set(km.assignments[6:])) == 1
    assert km.assignments[0] != km.assignments[6]
    cents = sorted(km.centroids.tolist())
    assert np.abs(np.array(cents[0]) - a.mean(axis=0)).max() < 0.2
    assert np.abs(np.array(cents[1]) - b.mean(axis=0)).max() < 0.2
    assert km.inertia == pytest.approx(brute_force_inertia(pts, 2))


def test_identical_points_zero_inertia():
    km = kmeans(np.ones((8, 3)), 3, seed=0)
    assert km.inertia == 0.0


def test_too_few_points_rejected():
    with pytest.raises(DataError):
        kmeans(np.zeros((2, 2)), 3, seed=0)


def test_deterministic_given_seed():
    pts = np.random.default_rng(2).random((50, 4))
    a, b = kmeans(pts, 4, seed=11), kmeans(pts, 4, seed=11)
    np.testing.assert_array_equal(a.assignments, b.assignments)
    np.testing.assert_array_equal(a.centroids, b.centroids)


def test_no_empty_clusters_with_duplicates():
    pts = np.vstack([np.zeros((10, 2)), np.ones((1, 2)), np.full((1, 2), 2.0)])
    km = kmeans(pts, 3, seed=0)
    assert len(np.unique(km.assignments)) == 3


def test_restarts_never_worse():
    pts = np.random.default_rng(5).random((60, 2))
    one = kmeans(pts, 5, seed=1, restarts=1)
    five = kmeans(pts, 5, seed=1, restarts=5)
    assert five.inertia <= one.inertia


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 40), st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_inertia_monotone_and_voronoi(n, d, k, seed):
    k = min(k, n)
    pts = np.random.default_rng(seed).normal(size=(n, d))
    km = kmeans(pts, k, seed=seed)
    trace = np.array(km.inertia_trace)
    assert np.all(np.diff(trace) <= 1e-9 * max(1.0, trace[0]))
    labels, d2 = nearest(pts, km.centroids)
    np.testing.assert_array_equal(labels, km.assignments)
    assert km.inertia == pytest.approx(d2.sum())


def test_quality_against_exhaustive_oracle():
    hits = 0
    for run in range(30):
        rng = np.random.default_rng(1000 + run)
        n, k = int(rng.integers(5, 9)), int(rng.integers(2, 4))
        pts = rng.normal(size=(n, 2))
        if kmeans(pts, k, seed=run).inertia <= 1.05 * brute_force_inertia(pts, k):
            hits += 1
    assert hits >= 27
