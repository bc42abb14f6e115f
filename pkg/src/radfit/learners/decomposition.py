"""Principal components and average-linkage agglomerative clustering."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from radfit.core import DataError, DomainError


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, p), orthonormal rows
    explained_variance: np.ndarray
    total_variance: float

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance == 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) @ self.components.T

    def inverse_transform(self, scores) -> np.ndarray:
        return np.asarray(scores, dtype=float) @ self.components + self.mean


def fit_pca(X, n_components: int) -> PcaModel:
    """Top eigenvectors of the sample covariance, via the SVD of the
    centered matrix. Each component's largest-magnitude entry is positive
    (the first such entry on exact ties)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise DataError("PCA needs a finite 2-D matrix")
    n, p = X.shape
    if not 1 <= n_components <= min(n, p):
        raise DomainError(f"n_components must lie in [1, {min(n, p)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    comps = vt[:n_components].copy()
    lead = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(n_components), lead])
    comps *= np.where(signs == 0, 1.0, signs)[:, None]
    denom = max(n - 1, 1)
    var = s[:n_components] ** 2 / denom
    total = float((Xc**2).sum() / denom)
    return PcaModel(mean, comps, var, total)


@dataclass(frozen=True, eq=False)
class Dendrogram:
    """Merge history in the usual linkage-matrix convention.

    Leaves are clusters ``0..n-1``; merge ``i`` creates cluster ``n + i``.
    Each row of ``merges`` is ``(a, b, distance, size)`` with ``a < b``.
    """

    merges: np.ndarray
    n_leaves: int

    @property
    def distances(self) -> np.ndarray:
        return self.merges[:, 2]

    def cut(self, n_clusters: int) -> np.ndarray:
        """Flat labels after undoing the last ``n_clusters - 1`` merges,
        numbered by first appearance in leaf order."""
        if not 1 <= n_clusters <= self.n_leaves:
            raise DomainError(f"n_clusters must lie in [1, {self.n_leaves}]")
        parent = np.arange(2 * self.n_leaves - 1)
        for i, (a, b, _, _) in enumerate(self.merges[: self.n_leaves - n_clusters]):
            parent[int(a)] = parent[int(b)] = self.n_leaves + i

        def root(c):
            while parent[c] != c:
                c = parent[c]
            return c

        roots = [root(c) for c in range(self.n_leaves)]
        seen: dict = {}
        return np.array([seen.setdefault(r, len(seen)) for r in roots])


def hierarchical_clustering(X) -> Dendrogram:
    """Average-linkage agglomerative clustering under Euclidean distance.

    Among equally close pairs the one whose smallest member row indices
    form the smallest (a, b) pair merges first.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("clustering needs a 2-D matrix with at least 2 rows")
    n = X.shape[0]
    D = np.empty((n, n))
    for r in range(n):
        D[r] = np.sqrt(((X - X[r]) ** 2).sum(axis=1))
    # Slot s holds the cluster whose smallest member row is s.
    D[np.tril_indices(n)] = np.inf
    size = np.ones(n)
    label = np.arange(n)
    active = np.ones(n, dtype=bool)
    merges = np.zeros((n - 1, 4))
    for step in range(n - 1):
        flat = int(np.argmin(D))
        i, j = divmod(flat, n)
        dist = D[i, j]
        a, b = sorted((label[i], label[j]))
        merges[step] = (a, b, dist, size[i] + size[j])
        # Lance-Williams update for average linkage, kept in the upper triangle
        full = np.where(np.isinf(D), D.T, D)
        new = (size[i] * full[i] + size[j] * full[j]) / (size[i] + size[j])
        active[j] = False
        size[i] += size[j]
        label[i] = n + step
        others = np.flatnonzero(active)
        others = others[others != i]
        lo, hi = np.minimum(others, i), np.maximum(others, i)
        D[lo, hi] = new[others]
        D[j, :] = np.inf
        D[:, j] = np.inf
    return Dendrogram(merges, n)
