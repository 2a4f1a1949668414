"""k-means (k-means++ seeding, Lloyd iterations) and x-means speaker-count
estimation with a spherical-Gaussian BIC.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import kernels

_MONO_TOL = 1e-9


@dataclass
class ClusterResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    k: int
    n_iter: int = 0
    inertia_history: List[float] = field(default_factory=list, repr=False)


def _as_points(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise ValueError(f"expected an n x e matrix, got shape {Z.shape}")
    return Z


def kmeans_pp_init(Z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(Z)
    chosen = [int(rng.integers(n))]
    d2 = np.sum((Z - Z[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # every point coincides with a centre already; pick an unused index
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(free[rng.integers(free.size)])
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((Z - Z[nxt]) ** 2, axis=1))
    return Z[chosen].copy()


def _centroids(Z, labels, k, old):
    C = old.copy()
    for j in range(k):
        members = labels == j
        if members.any():
            C[j] = Z[members].mean(axis=0)
    return C


def _repair_empty(Z, labels, mind, k):
    """Give every empty cluster the point currently farthest from its centroid."""
    labels = labels.copy()
    mind = mind.copy()
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        movable = counts[labels] > 1
        cand = np.flatnonzero(movable)
        far = cand[np.argmax(mind[cand])]
        counts[labels[far]] -= 1
        labels[far] = j
        counts[j] = 1
        mind[far] = 0.0
    return labels


def lloyd(Z, init: np.ndarray, max_iter: int = 100) -> ClusterResult:
    """Lloyd iterations from the given centroids until the assignment is stable."""
    Z = _as_points(Z)
    C = np.array(init, dtype=np.float64)
    k = len(C)
    labels = None
    history: List[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        new_labels, mind = kernels.lloyd_assign(Z, C)
        new_labels = _repair_empty(Z, new_labels, mind, k)
        if labels is not None and np.array_equal(new_labels, labels):
            it -= 1
            break
        labels = new_labels
        C = _centroids(Z, labels, k, C)
        inertia = float(np.sum((Z - C[labels]) ** 2))
        if history and inertia > history[-1] * (1 + _MONO_TOL) + _MONO_TOL:
            raise AssertionError(
                f"k-means inertia increased: {history[-1]!r} -> {inertia!r} at iteration {it}"
            )
        history.append(inertia)
    return ClusterResult(labels, C, history[-1], k, it, history)


def kmeans(Z, k: int, seed: int = 0, max_iter: int = 100) -> ClusterResult:
    Z = _as_points(Z)
    n = len(Z)
    if k < 2 or k > n:
        raise ValueError(f"k must satisfy 2 <= k <= n (k={k}, n={n})")
    rng = np.random.default_rng(seed)
    return lloyd(Z, kmeans_pp_init(Z, k, rng), max_iter)


def bic_score(Z, result: ClusterResult) -> float:
    """Bayesian information criterion under identical spherical Gaussians.

    Larger is better.  A perfect fit (zero within-cluster variance) scores
    ``+inf``.
    """
    Z = _as_points(Z)
    n, dim = Z.shape
    k = result.k
    if n <= k:
        raise ValueError(f"BIC needs more points than clusters (n={n}, k={k})")
    counts = np.bincount(result.labels, minlength=k).astype(np.float64)
    inertia = float(np.sum((Z - result.centroids[result.labels]) ** 2))
    var = inertia / ((n - k) * dim)
    if var <= 0:
        return float("inf")
    nz = counts[counts > 0]
    ll = (
        float(np.sum(nz * np.log(nz / n)))
        - 0.5 * n * dim * np.log(2 * np.pi * var)
        - 0.5 * (n - k) * dim
    )
    n_params = (k - 1) + k * dim + 1
    return float(ll - 0.5 * n_params * np.log(n))


def _single(Z) -> ClusterResult:
    c = Z.mean(axis=0, keepdims=True)
    return ClusterResult(np.zeros(len(Z), dtype=np.int64), c, float(np.sum((Z - c) ** 2)), 1)


def _principal_axis(Z: np.ndarray):
    c = Z.mean(axis=0)
    X = Z - c
    evals, evecs = np.linalg.eigh(X.T @ X / len(Z))
    return c, max(float(evals[-1]), 0.0), evecs[:, -1]


def _split(Z: np.ndarray, max_iter: int, min_child: int = 1) -> Optional[ClusterResult]:
    """Two children seeded at centroid +/- sqrt(2 lambda) u along the principal axis."""
    c, lam, u = _principal_axis(Z)
    if lam == 0.0:
        return None
    offset = np.sqrt(2.0 * lam) * u
    res = lloyd(Z, np.stack([c + offset, c - offset]), max_iter)
    if np.bincount(res.labels, minlength=2).min() < max(1, min_child):
        return None
    return res


def _accept_split(members: np.ndarray, children: ClusterResult, split_test: str) -> bool:
    if split_test == "full":
        return bic_score(members, children) > bic_score(members, _single(members))
    # 1-D BIC on the projection onto the parent's principal axis
    c, _, u = _principal_axis(members)
    proj = ((members - c) @ u)[:, None]
    labels = children.labels
    cents = np.array([[proj[labels == j].mean()] for j in range(2)])
    inertia = float(np.sum((proj[:, 0] - cents[labels, 0]) ** 2))
    split = ClusterResult(labels, cents, inertia, 2)
    return bic_score(proj, split) > bic_score(proj, _single(proj))


SPLIT_TESTS = ("full", "projected")


def xmeans(Z, k_min: int = 2, k_max: Optional[int] = None, seed: int = 0, max_iter: int = 100,
           split_test: str = "full", min_child: int = 1) -> ClusterResult:
    """Estimate the cluster count by BIC-driven splitting, never below ``k_min``.

    Starts from ``kmeans(k_min)``; each round tries to split every cluster in
    two and keeps a split when the children's local BIC beats the parent's.
    The result is a Lloyd refinement at the chosen count.

    ``split_test="full"`` compares BIC in the full embedding space.
    ``"projected"`` compares it on the members' projection onto the parent's
    principal axis, which does not over-split elongated (anisotropic)
    clusters the way the spherical model in many dimensions does.

    A split whose smaller child would hold fewer than ``min_child`` points is
    never tried; BIC on a handful of points is too noisy to trust.
    """
    if split_test not in SPLIT_TESTS:
        raise ValueError(f"split_test must be one of {SPLIT_TESTS}")
    Z = _as_points(Z)
    n = len(Z)
    if k_max is None:
        k_max = min(n, 10)
    if not 2 <= k_min <= k_max <= n:
        raise ValueError(f"need 2 <= k_min <= k_max <= n (got {k_min}, {k_max}, n={n})")
    res = kmeans(Z, k_min, seed, max_iter)
    split_any = False
    while res.k < k_max:
        centroids = []
        n_split = 0
        for j in range(res.k):
            members = Z[res.labels == j]
            if res.k + n_split < k_max and len(members) >= max(3, 2 * min_child):
                children = _split(members, max_iter, min_child)
                if children is not None and _accept_split(members, children, split_test):
                    centroids.extend(children.centroids)
                    n_split += 1
                    continue
            centroids.append(res.centroids[j])
        if n_split == 0:
            break
        split_any = True
        res = lloyd(Z, np.array(centroids), max_iter)
    if not split_any:
        return res
    return lloyd(Z, res.centroids, max_iter)
