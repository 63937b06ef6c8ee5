"""Seeded k-means and exact silhouette scoring.

``kmeans`` is a deterministic function of (points, k, seed, max_iters, tol):
k-means++ seeding driven by a Philox generator, Lloyd iterations until the
relative centroid movement drops below ``tol`` or the assignment reaches a
fixed point, and deterministic repair of emptied clusters (the empty centroid
is reseeded to the point farthest from it, stolen from a cluster that can
spare one). Returned clusterings never contain empty clusters.

``silhouette`` is the exact all-pairs score: per point,
``s = (b - a) / max(a, b)`` with ``a`` the mean intra-cluster distance
excluding self and ``b`` the smallest mean distance to any other cluster;
singleton clusters and 0/0 both score 0.

``avg_silhouette`` runs N independently seeded restarts at a fixed k and
averages their scores. Per-run seeds are derived order-free from the base
seed, and the mean is a fixed-order reduction, so results are bitwise
identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ValidationError
from .seeds import derive_seed, generator

__all__ = [
    "Clustering",
    "SilhouetteSummary",
    "kmeans",
    "silhouette",
    "avg_silhouette",
    "pairwise_distances",
]


@dataclass(frozen=True)
class Clustering:
    """One k-means solution. ``inertia`` is the within-cluster sum of squares
    of the returned assignment; every cluster index in [0, k) is non-empty."""

    assignments: np.ndarray   # (n,) int64 in [0, k)
    centroids: np.ndarray     # (k, d) float64
    inertia: float
    iterations: int
    seed: int

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


@dataclass(frozen=True)
class SilhouetteSummary:
    """Per-run silhouette scores of N seeded restarts at one k, plus their mean."""

    k: int
    per_run_scores: np.ndarray  # (N,) float64, each in [-1, 1]
    mean_score: float

    @property
    def n_runs(self) -> int:
        return self.per_run_scores.shape[0]


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    """Full Euclidean distance matrix; computed once and shared across runs."""
    return cdist(points, points, metric="euclidean")


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++ seeding: first center uniform, then D^2-weighted
    candidates with the usual 2 + log(k) local trials, keeping the candidate
    that most reduces the potential."""
    n = points.shape[0]
    n_trials = 2 + int(np.log(k)) if k > 1 else 1
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # All remaining mass at distance zero (duplicate points): pick the
            # lowest-index point not already chosen.
            mask = np.ones(n, dtype=bool)
            mask[chosen[:j]] = False
            chosen[j] = int(np.flatnonzero(mask)[0])
            continue
        candidates = rng.choice(n, size=n_trials, p=d2 / total)
        best_idx, best_d2, best_pot = -1, None, np.inf
        for c in candidates:
            cand_d2 = np.minimum(d2, ((points - points[int(c)]) ** 2).sum(axis=1))
            pot = float(cand_d2.sum())
            if pot < best_pot:
                best_idx, best_d2, best_pot = int(c), cand_d2, pot
        chosen[j] = best_idx
        d2 = best_d2
    return points[chosen].copy()


def _assign(points: np.ndarray, centroids: np.ndarray, x_sq: np.ndarray):
    """Nearest-centroid labels plus the squared distance to the winner."""
    c_sq = (centroids * centroids).sum(axis=1)
    d2 = x_sq[:, None] + c_sq[None, :] - 2.0 * (points @ centroids.T)
    labels = np.argmin(d2, axis=1)
    best = np.maximum(d2[np.arange(points.shape[0]), labels], 0.0)
    return labels, best


def _repair_empty(points, centroids, labels, k):
    """Give every empty cluster the farthest point it can steal.

    Donors are restricted to clusters that keep >= 1 member afterwards, so
    the repair can never create a new empty cluster; with k <= n a donor
    always exists.
    """
    counts = np.bincount(labels, minlength=k)
    repaired = False
    for c in np.flatnonzero(counts == 0):
        eligible = counts[labels] >= 2
        dist = ((points - centroids[c]) ** 2).sum(axis=1)
        dist[~eligible] = -np.inf
        donor = int(np.argmax(dist))
        counts[labels[donor]] -= 1
        labels[donor] = c
        counts[c] += 1
        centroids[c] = points[donor]
        repaired = True
    return repaired


def kmeans(points: np.ndarray, k: int, seed: int,
           max_iters: int = 300, tol: float = 1e-6) -> Clustering:
    """Lloyd's algorithm from a k-means++ start, fully seed-deterministic.

    ``tol`` is relative: iteration stops when the Frobenius norm of the
    centroid update falls below ``tol`` times the norm of the previous
    centroids, or when the assignment stops changing.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"points must be 2-D, got shape {x.shape}")
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"need 1 <= k <= n, got k={k}, n={n}")
    if not np.isfinite(x).all():
        raise ValidationError("non-finite entries in points")

    rng = generator(seed)
    centroids = _kmeans_pp_init(x, k, rng)
    x_sq = (x * x).sum(axis=1)

    labels = np.full(n, -1, dtype=np.int64)
    prev_obj = np.inf
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        new_labels, best_d2 = _assign(x, centroids, x_sq)
        repaired = _repair_empty(x, centroids, new_labels, k)
        if repaired:
            prev_obj = np.inf  # repairs may bump the objective; restart the check
        else:
            # Lloyd monotonicity holds only on repair-free iterations.
            obj = float(best_d2.sum())
            assert obj <= prev_obj * (1 + 1e-9) + 1e-12, "inertia increased"
            prev_obj = obj
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels

        one_hot = np.zeros((n, k), dtype=np.float64)
        one_hot[np.arange(n), labels] = 1.0
        counts = one_hot.sum(axis=0)
        new_centroids = (one_hot.T @ x) / counts[:, None]
        movement = float(np.linalg.norm(new_centroids - centroids))
        scale = float(np.linalg.norm(centroids))
        centroids = new_centroids
        if movement <= tol * max(scale, 1e-12):
            break

    # Final labeling against the final centroids, repaired if degenerate.
    labels, _ = _assign(x, centroids, x_sq)
    _repair_empty(x, centroids, labels, k)
    diffs = x - centroids[labels]
    inertia = float((diffs * diffs).sum())
    return Clustering(
        assignments=labels,
        centroids=centroids,
        inertia=inertia,
        iterations=iterations,
        seed=int(seed),
    )


def silhouette(points: np.ndarray, assignments: np.ndarray,
               dist: np.ndarray | None = None) -> float:
    """Mean exact silhouette score of one clustering, in [-1, 1].

    ``dist`` may carry a precomputed all-pairs distance matrix; callers that
    score many clusterings of the same points should pass it to avoid
    recomputing the O(n^2 d) distances.
    """
    labels = np.asarray(assignments)
    n = labels.shape[0]
    if n < 3:
        raise ValidationError(f"silhouette needs n >= 3 points, got {n}")
    uniq, codes = np.unique(labels, return_inverse=True)
    k = uniq.shape[0]
    if k < 2:
        raise ValidationError("silhouette needs at least 2 distinct clusters")
    if dist is None:
        dist = pairwise_distances(np.asarray(points, dtype=np.float64))
    elif dist.shape != (n, n):
        raise ValidationError(f"dist must be ({n}, {n}), got {dist.shape}")

    one_hot = np.zeros((n, k), dtype=np.float64)
    one_hot[np.arange(n), codes] = 1.0
    counts = one_hot.sum(axis=0)
    sums = dist @ one_hot                      # (n, k): total distance to each cluster

    own = sums[np.arange(n), codes]
    own_count = counts[codes]
    with np.errstate(invalid="ignore", divide="ignore"):
        a = own / (own_count - 1.0)            # singleton rows give nan, fixed below
    mean_other = sums / counts[None, :]
    mean_other[np.arange(n), codes] = np.inf
    b = mean_other.min(axis=1)

    denom = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = (b - a) / denom
    s = np.where(own_count == 1, 0.0, s)       # singleton convention
    s = np.where(denom > 0, s, 0.0)            # 0/0 convention
    return float(np.mean(s))


def avg_silhouette(points: np.ndarray, k: int, n_runs: int = 30,
                   base_seed: int = 0, *, max_iters: int = 300,
                   tol: float = 1e-6, workers: int = 1,
                   dist: np.ndarray | None = None) -> SilhouetteSummary:
    """Mean silhouette over ``n_runs`` independently seeded k-means restarts.

    Run ``i`` clusters with seed ``derive_seed(base_seed, i)``; the summary is
    bitwise independent of execution order and of ``workers``.
    """
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if not 2 <= k <= n - 1:
        raise ValidationError(f"need 2 <= k <= n-1, got k={k}, n={n}")
    if n_runs < 1:
        raise ValidationError(f"n_runs must be >= 1, got {n_runs}")
    if dist is None:
        dist = pairwise_distances(x)

    def one_run(i: int) -> float:
        c = kmeans(x, k, derive_seed(base_seed, i), max_iters=max_iters, tol=tol)
        return silhouette(x, c.assignments, dist=dist)

    scores = np.empty(n_runs, dtype=np.float64)
    if workers <= 1:
        for i in range(n_runs):
            scores[i] = one_run(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for i, value in enumerate(pool.map(one_run, range(n_runs))):
                scores[i] = value
    return SilhouetteSummary(k=k, per_run_scores=scores, mean_score=float(np.mean(scores)))
