"""k-means with k-means++ seeding and Lloyd iterations, used to synthesise pseudo-labels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass
class KMeansModel:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    inertia_trace: list[float] = field(default_factory=list)
    n_iter: int = 0

    def predict(self, points: np.ndarray) -> np.ndarray:
        return nearest(points, self.centroids)[0]


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # exact row-wise differences rather than the |a|^2 - 2ab + |b|^2 expansion
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def nearest(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest centroid per point (lowest index on ties) and its squared distance."""
    d2 = _sq_dists(points, centroids)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(len(points)), labels]


def kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2 seeding: each new centre is drawn with probability proportional to squared distance."""
    n = len(points)
    centres = [points[rng.integers(n)]]
    closest = ((points - centres[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centres.append(points[idx])
        closest = np.minimum(closest, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centres, dtype=np.float64)


def _repair_empty(points, centroids, labels, d2) -> bool:
    """Move each empty centroid onto the point farthest from its own centroid."""
    k = len(centroids)
    counts = np.bincount(labels, minlength=k)
    changed = False
    for c in np.flatnonzero(counts == 0):
        movable = counts[labels] > 1
        if not movable.any() or d2[movable].max() <= 0:
            break
        far = int(np.flatnonzero(movable)[np.argmax(d2[movable])])
        counts[labels[far]] -= 1
        counts[c] += 1
        labels[far] = c
        d2[far] = 0.0
        centroids[c] = points[far]
        changed = True
    return changed


def _lloyd(points, centroids, max_iters):
    labels, d2 = nearest(points, centroids)
    trace = [float(d2.sum())]
    it = 0
    for it in range(1, max_iters + 1):
        _repair_empty(points, centroids, labels, d2)
        for c in range(len(centroids)):
            members = labels == c
            if members.any():
                centroids[c] = points[members].mean(axis=0)
        new_labels, d2 = nearest(points, centroids)
        trace.append(float(d2.sum()))
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return KMeansModel(centroids, labels, float(d2.sum()), trace, it)


def kmeans(points: np.ndarray, k: int, seed: int, max_iters: int = 300, restarts: int = 10) -> KMeansModel:
    """Cluster ``points`` into ``k`` groups; the lowest-inertia run of ``restarts`` wins.

    ``inertia_trace[t]`` is the total squared distance after the assignment
    step of iteration t, so it never increases. Final assignments are always
    nearest-centroid assignments for the returned centroids.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise DataError("points must be a 2-d matrix")
    n = len(points)
    if k < 1 or n < k:
        raise DataError(f"k-means needs 1 <= K <= n, got K={k}, n={n}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        model = _lloyd(points, kmeans_pp_init(points, k, rng), max_iters)
        if best is None or model.inertia < best.inertia:
            best = model
    return best
