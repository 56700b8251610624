"""Binary clustering of joint representations into deep-level labels.

Labels are canonicalized so that the first example always gets label 0;
assignments therefore do not depend on how a method happens to number its
clusters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, DegenerateData, InvalidAssignment
from .text import as_text

MAX_RESEEDS = 5


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    method: str
    seed: int
    inertia_or_cut: float
    n_clusters: int = 2
    raw_labels: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return len(self.labels)


def _as_matrix(points) -> np.ndarray:
    rows = [getattr(p, "vector", p) for p in points]
    X = np.asarray(rows, dtype=float)
    if X.ndim != 2:
        raise ValueError("points must form a 2-D array")
    return X


def canonicalize(labels) -> np.ndarray:
    """Renumber clusters by first appearance."""
    mapping: dict[int, int] = {}
    out = np.empty(len(labels), dtype=int)
    for i, lab in enumerate(labels):
        lab = int(lab)
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


def one_vs_rest(labels) -> np.ndarray:
    """Reduce a multi-cluster labelling to largest-cluster-vs-rest."""
    labels = np.asarray(labels)
    values, counts = np.unique(labels, return_counts=True)
    largest = values[np.argmax(counts)]
    return canonicalize((labels == largest).astype(int))


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = [X[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(((X[:, None, :] - np.asarray(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        idx = rng.integers(n) if total == 0 else rng.choice(n, p=d2 / total)
        centers.append(X[idx])
    return np.asarray(centers)


def _lloyd(X: np.ndarray, k: int, rng: np.random.Generator, tol=1e-6, max_iter=300):
    C = _kmeanspp(X, k, rng)
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - C[None]) ** 2).sum(-1)
        labels = np.argmin(d2, axis=1)
        newC = C.copy()
        for j in range(k):
            members = X[labels == j]
            if len(members):
                newC[j] = members.mean(axis=0)
        shift = np.max(np.linalg.norm(newC - C, axis=1))
        C = newC
        if shift < tol:
            break
    d2 = ((X[:, None, :] - C[None]) ** 2).sum(-1)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(len(X)), labels].sum())
    return labels, inertia


def kmeans(points, k: int = 2, seed: int = 0) -> ClusterAssignment:
    X = _as_matrix(points)
    if len(X) < k:
        raise DegenerateData(f"need at least {k} points, got {len(X)}")
    if np.all(X == X[0]):
        raise DegenerateData("all points are identical")
    for attempt in range(MAX_RESEEDS + 1):
        rng = np.random.default_rng([seed, attempt])
        labels, inertia = _lloyd(X, k, rng)
        if len(np.unique(labels)) == k:
            lab = canonicalize(labels)
            return ClusterAssignment(lab, "kmeans", seed, inertia, k, lab)
    raise DegenerateData(f"k-means produced fewer than {k} clusters after {MAX_RESEEDS} reseeds")


def kmeans_binary(points, seed: int = 0) -> ClusterAssignment:
    return kmeans(points, 2, seed)


def knn_affinity(X: np.ndarray, n_neighbors: int) -> np.ndarray:
    n = len(X)
    d2 = ((X[:, None, :] - X[None]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    A = np.zeros((n, n))
    nn = np.argsort(d2, axis=1, kind="stable")[:, :n_neighbors]
    A[np.repeat(np.arange(n), n_neighbors), nn.ravel()] = 1.0
    return np.maximum(A, A.T)


def _cut(A: np.ndarray, labels: np.ndarray) -> float:
    return float(A[labels[:, None] != labels[None, :]].sum() / 2)


def spectral(points, k: int = 2, seed: int = 0, n_neighbors: int = 10) -> ClusterAssignment:
    """Unnormalized-Laplacian spectral clustering on a symmetric k-NN graph.

    For two clusters the Fiedler vector is thresholded at zero; a
    disconnected graph is split into its largest component and the rest.
    More clusters run k-means on the bottom-k eigenvectors.
    """
    X = _as_matrix(points)
    n = len(X)
    if n < 3:
        raise DegenerateData("spectral clustering needs at least 3 points")
    if n_neighbors >= n:
        raise ConfigError(f"n_neighbors={n_neighbors} must be smaller than the point count {n}")
    if np.all(X == X[0]):
        raise DegenerateData("all points are identical")
    A = knn_affinity(X, n_neighbors)
    L = np.diag(A.sum(1)) - A

    if k == 2:
        n_comp, comp = connected_components(A, directed=False)
        if n_comp > 1:
            sizes = np.bincount(comp)
            # ties resolved toward the component holding the lowest index
            largest = int(np.argmax(sizes))
            labels = (comp != largest).astype(int)
        else:
            _, vecs = np.linalg.eigh(L)
            labels = (vecs[:, 1] > 0).astype(int)
        if len(np.unique(labels)) < 2:
            raise DegenerateData("spectral split produced a single cluster")
        lab = canonicalize(labels)
        return ClusterAssignment(lab, "spectral", seed, _cut(A, lab), 2, lab)

    _, vecs = np.linalg.eigh(L)
    emb = vecs[:, :k]
    inner = kmeans(emb, k, seed)
    return ClusterAssignment(inner.labels, "spectral", seed, _cut(A, inner.labels), k, inner.labels)


def spectral_binary(points, seed: int = 0, n_neighbors: int = 10) -> ClusterAssignment:
    return spectral(points, 2, seed, n_neighbors)


def cluster(points, method: str = "spectral", k: int = 2, seed: int = 0,
            n_neighbors: int = 10) -> ClusterAssignment:
    """Binary deep-level labels; k > 2 is reduced by one-vs-rest on the
    largest cluster (the ablation pathway)."""
    if k < 2:
        raise ConfigError("k must be >= 2")
    if method == "kmeans":
        a = kmeans(points, k, seed)
    elif method == "spectral":
        a = spectral(points, k, seed, n_neighbors)
    else:
        raise ConfigError(f"unknown clustering method {method!r}")
    if k == 2:
        return a
    binary = one_vs_rest(a.labels)
    if len(np.unique(binary)) < 2:
        raise DegenerateData("one-vs-rest reduction produced a single label")
    return ClusterAssignment(binary, a.method, seed, a.inertia_or_cut, k, a.labels)


def assign_deep_labels(assignment: ClusterAssignment, texts: Sequence) -> list:
    """Pair each auxiliary text with its cluster label."""
    if len(assignment.labels) == 0 or len(assignment.labels) != len(texts):
        raise InvalidAssignment(
            f"{len(assignment.labels)} labels for {len(texts)} texts")
    return [(as_text(t), int(l)) for t, l in zip(texts, assignment.labels)]
