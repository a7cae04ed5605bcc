"""Lloyd k-means with k-means++ initialization.

Distortion is the mean squared distance of points to their assigned
centroid. Iteration stops when the relative distortion improvement drops
below 1e-6 or ``max_iters`` is reached. Empty clusters are reseeded to the
point currently farthest from its centroid. Every random draw goes through
one ``default_rng(seed)``, so results are deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

REL_TOL = 1e-6


@dataclass(eq=False)
class KMeansModel:
    centroids: np.ndarray  # (k, d)
    distortion: float
    # per-iteration distortion values, recorded for convergence checks
    distortion_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 1:
            raise ValueError(f"centroids must be (k, d) with k >= 1, got {self.centroids.shape}")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("centroids must be finite")
        if self.distortion < 0:
            raise ValueError(f"distortion must be non-negative, got {self.distortion}")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances via the expanded-product identity."""
    p2 = np.einsum("ij,ij->i", points, points)
    c2 = np.einsum("ij,ij->i", centroids, centroids)
    d2 = p2[:, None] + c2[None, :] - 2.0 * (points @ centroids.T)
    return np.maximum(d2, 0.0)


def kmeans_assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid labels and the squared distance to that centroid."""
    points = np.asarray(points, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    d2 = _sq_distances(points, centroids)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(len(points)), labels]


def _init_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = rng.integers(n)
    best = np.full(n, np.inf)
    for i in range(1, k):
        diff = points - points[chosen[i - 1]]
        best = np.minimum(best, np.einsum("ij,ij->i", diff, diff))
        total = best.sum()
        if total > 0:
            chosen[i] = rng.choice(n, p=best / total)
        else:
            # all remaining mass on duplicates of chosen points
            chosen[i] = rng.integers(n)
    return points[chosen].copy()


def kmeans_fit(points: np.ndarray, k: int, max_iters: int = 50, seed: int = 0) -> KMeansModel:
    """k-means++ then Lloyd iterations; deterministic given ``seed``."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"points must be (n, d), got shape {points.shape}")
    n = points.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")

    rng = np.random.default_rng(seed)
    centroids = _init_plus_plus(points, k, rng)
    history: list[float] = []
    prev = np.inf
    for _ in range(max_iters):
        labels, sqd = kmeans_assign(points, centroids)
        distortion = float(sqd.mean())
        history.append(distortion)

        new_centroids = np.zeros_like(centroids)
        counts = np.bincount(labels, minlength=k).astype(np.float64)
        np.add.at(new_centroids, labels, points)
        nonempty = counts > 0
        new_centroids[nonempty] /= counts[nonempty, None]
        for c in np.nonzero(~nonempty)[0]:
            far = int(np.argmax(sqd))
            new_centroids[c] = points[far]
            sqd[far] = 0.0  # keep later empty clusters from grabbing the same point
        centroids = new_centroids

        if prev - distortion <= REL_TOL * max(prev, 1e-300) and np.isfinite(prev):
            break
        prev = distortion

    labels, sqd = kmeans_assign(points, centroids)
    distortion = float(sqd.mean())
    history.append(distortion)
    return KMeansModel(centroids=centroids, distortion=distortion, distortion_history=history)
