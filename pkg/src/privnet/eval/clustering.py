"""K-means (Lloyd iterations, k-means++ seeding) and the V-measure of a clustering."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError


def _kmeans_pp(x: np.ndarray, k: int, rng) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.choice(len(x), p=d2 / total) if total > 0 else rng.integers(len(x))
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(x, centers, max_iter=300, tol=1e-10):
    for _ in range(max_iter):
        dist = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = dist.argmin(axis=1)
        new = np.array([x[assign == c].mean(axis=0) if np.any(assign == c) else centers[c]
                        for c in range(len(centers))])
        shift = ((new - centers) ** 2).sum()
        centers = new
        if shift <= tol:
            break
    dist = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = dist.argmin(axis=1)
    return assign, centers, float(dist[np.arange(len(x)), assign].sum())


def kmeans(x, k: int = 2, seed: int = 0, n_init: int = 10):
    """Best-inertia clustering over ``n_init`` k-means++ restarts.

    Returns ``(assignment, centers, inertia)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(np.unique(x, axis=0)) < k:
        raise ContractError(f"k-means with k={k} needs at least {k} distinct points")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        run = _lloyd(x, _kmeans_pp(x, k, rng))
        if best is None or run[2] < best[2]:
            best = run
    return best


def contingency(labels, clusters) -> np.ndarray:
    _, li = np.unique(labels, return_inverse=True)
    _, ci = np.unique(clusters, return_inverse=True)
    table = np.zeros((li.max() + 1, ci.max() + 1))
    np.add.at(table, (li, ci), 1)
    return table


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def v_measure_from_contingency(table) -> tuple[float, float, float]:
    """``(homogeneity, completeness, v_measure)`` for a classes x clusters count table."""
    n = np.asarray(table, dtype=np.float64)
    total = n.sum()
    h_c = _entropy(n.sum(axis=1))
    h_k = _entropy(n.sum(axis=0))
    nz = n > 0
    joint = n[nz] / total
    # H(C|K) and H(K|C) from the joint distribution
    h_c_given_k = float(-(joint * np.log(n[nz] / np.broadcast_to(n.sum(axis=0), n.shape)[nz])).sum())
    h_k_given_c = float(-(joint * np.log(n[nz] / np.broadcast_to(n.sum(axis=1)[:, None], n.shape)[nz])).sum())
    hom = 1.0 if h_c == 0 else 1.0 - h_c_given_k / h_c
    com = 1.0 if h_k == 0 else 1.0 - h_k_given_c / h_k
    v = 0.0 if hom + com == 0 else 2 * hom * com / (hom + com)
    return hom, com, v


def v_measure(labels, clusters) -> float:
    return v_measure_from_contingency(contingency(labels, clusters))[2]


def kmeans_vmeasure(vectors, labels, k: int = 2, seed: int = 0, n_init: int = 10):
    """Cluster user vectors and score the clusters against attribute labels.

    Returns ``(assignment, v_measure)``.
    """
    assign, _, _ = kmeans(vectors, k, seed, n_init)
    return assign, v_measure(labels, assign)
