"""CART decision trees and random forests."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from radfit.core import DataError, DomainError

LEAF = -1
_TIE_RTOL = 1e-12


def _check_matrix(X, y=None) -> tuple[np.ndarray, Optional[np.ndarray]]:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError("feature matrix must be 2-D")
    if not np.all(np.isfinite(X)):
        raise DataError("feature matrix contains non-finite values")
    if y is None:
        return X, None
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise DataError(f"expected {X.shape[0]} targets, got shape {y.shape}")
    return X, y


def presort(X: np.ndarray) -> np.ndarray:
    """Row order of every column, shape (n_features, n_rows).

    Trees trained repeatedly on the same matrix (boosting stages, model
    banks) can share this to skip the sorting step.
    """
    return np.argsort(X, axis=0, kind="stable").T.copy()


@dataclass(frozen=True, eq=False)
class TreeModel:
    """Array-encoded binary tree; node 0 is the root.

    Internal nodes send rows with ``x[feature] <= threshold`` left. Leaves
    have ``feature == -1`` and emit ``value`` (a class label or a mean).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    task: str
    n_features: int
    max_depth: Optional[int] = None
    min_leaf: int = 1

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=int)
        for k in range(self.n_nodes):  # children always follow their parent
            if self.feature[k] != LEAF:
                d[self.left[k]] = d[self.right[k]] = d[k] + 1
        return int(d.max())

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} feature columns")
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        active = self.feature[node] != LEAF
        while active.any():
            r, k = rows[active], node[active]
            go_left = X[r, self.feature[k]] <= self.threshold[k]
            node[r] = np.where(go_left, self.left[k], self.right[k])
            active = self.feature[node] != LEAF
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "task": self.task,
            "n_features": self.n_features,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeModel":
        return cls(
            feature=np.asarray(d["feature"], dtype=int),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=int),
            right=np.asarray(d["right"], dtype=int),
            value=np.asarray(d["value"], dtype=float if d["task"] == "regress" else None),
            task=d["task"],
            n_features=int(d["n_features"]),
            max_depth=d["max_depth"],
            min_leaf=int(d["min_leaf"]),
        )


def _best_split(Xs: np.ndarray, cost: np.ndarray, min_leaf: int, scale: float):
    """Pick (column position, left size) minimizing ``cost``.

    ``Xs`` holds the node's sorted column values, shape (p, m); ``cost``
    has shape (p, m - 1) with entry k the cost of putting the first k + 1
    rows left. Costs within a relative 1e-12 of the node's own cost
    ``scale`` count as ties and resolve to the lowest column, then the
    lowest threshold.
    """
    m = Xs.shape[1]
    valid = Xs[:, 1:] > Xs[:, :-1]
    sizes = np.arange(1, m)
    valid &= (sizes >= min_leaf) & (m - sizes >= min_leaf)
    if not valid.any():
        return None
    cost = np.where(valid, cost, np.inf)
    best = cost.min()
    tied = cost <= best + _TIE_RTOL * scale
    flat = int(np.argmax(tied))  # row-major: lowest column, then lowest position
    j, k = divmod(flat, m - 1)
    return j, k + 1, best


def _threshold(lo: float, hi: float) -> float:
    mid = 0.5 * (lo + hi)
    return mid if lo <= mid < hi else lo


class _Grower:
    def __init__(self, X, y, task, max_depth, min_leaf, order, feature_fraction, rng):
        self.X, self.y, self.task = X, y, task
        self.max_depth = np.inf if max_depth is None else max_depth
        self.min_leaf = min_leaf
        self.order = order
        self.xsorted = np.take_along_axis(X.T, order, axis=1)
        self.n_sub = max(1, int(round(feature_fraction * X.shape[1])))
        self.rng = rng
        if task == "classify":
            self.classes, codes = np.unique(y, return_inverse=True)
            self.onehot = np.eye(self.classes.size)[codes]
        else:
            self.yf = y.astype(float)
        self.nodes: list[list] = []

    def leaf_value(self, rows):
        if self.task == "classify":
            counts = self.onehot[rows].sum(axis=0)
            return self.classes[int(np.argmax(counts))]  # ties to the lowest label
        return float(self.yf[rows].mean())

    def pure(self, rows) -> bool:
        if self.task == "classify":
            return bool(np.all(self.onehot[rows].sum(axis=0).max() == rows.size))
        v = self.yf[rows]
        return bool(np.all(v == v[0]))

    def split(self, sel: np.ndarray, Xs: np.ndarray, cols: np.ndarray):
        """Best (column, threshold) given the node's rows sorted per column."""
        m = sel.shape[1]
        n_left = np.arange(1, m, dtype=float)
        n_right = m - n_left
        if self.task == "classify":
            c = np.cumsum(self.onehot[sel], axis=1)  # (p, m, K)
            left = c[:, :-1, :]
            right = c[:, -1:, :] - left
            cost = (n_left - (left**2).sum(-1) / n_left) + (n_right - (right**2).sum(-1) / n_right)
            scale = m - float((c[0, -1] ** 2).sum()) / m
        else:
            v = self.yf[sel[0]]
            mean = v.mean()
            scale = float(((v - mean) ** 2).sum())
            # SSE(left) + SSE(right) = total - (L^2 / n_left + R^2 / n_right)
            # for centered sums L, R; centering keeps them well conditioned.
            s1 = np.cumsum(self.yf[sel] - mean, axis=1)
            l1 = s1[:, :-1]
            r1 = s1[:, -1:] - l1
            cost = scale - (l1**2 / n_left + r1**2 / n_right)
        found = _best_split(Xs, cost, self.min_leaf, scale)
        if found is None:
            return None
        jpos, k, _ = found
        return int(cols[jpos]), _threshold(Xs[jpos, k - 1], Xs[jpos, k])

    def grow(self, rows: np.ndarray, depth: int, sel=None, Xs=None) -> int:
        # With all columns as candidates the per-column sorted rows are
        # partitioned down the tree; otherwise they are rebuilt per node
        # for the drawn columns only.
        node = len(self.nodes)
        self.nodes.append([LEAF, 0.0, LEAF, LEAF, self.leaf_value(rows)])
        if depth >= self.max_depth or rows.size < 2 * self.min_leaf or self.pure(rows):
            return node
        n, p = self.X.shape
        if self.n_sub < p:
            cols = np.sort(self.rng.choice(p, self.n_sub, replace=False))
            in_node = np.zeros(n, dtype=bool)
            in_node[rows] = True
            member = in_node[self.order[cols]]
            sel = self.order[cols][member].reshape(cols.size, rows.size)
            Xs = self.xsorted[cols][member].reshape(cols.size, rows.size)
        else:
            cols = np.arange(p)
        found = self.split(sel, Xs, cols)
        if found is None:
            return node
        col, thr = found
        go_left = self.X[rows, col] <= thr
        self.nodes[node][:2] = [col, thr]
        child = [None, None, None, None]
        if self.n_sub >= p and depth + 1 < self.max_depth:
            to_left = np.zeros(n, dtype=bool)
            to_left[rows[go_left]] = True
            lm = to_left[sel]
            n_l = int(go_left.sum())
            child = [sel[lm].reshape(p, n_l), Xs[lm].reshape(p, n_l), sel[~lm].reshape(p, -1), Xs[~lm].reshape(p, -1)]
        self.nodes[node][2] = self.grow(rows[go_left], depth + 1, child[0], child[1])
        self.nodes[node][3] = self.grow(rows[~go_left], depth + 1, child[2], child[3])
        return node


def train_cart(
    X,
    y,
    task: str = "classify",
    max_depth: Optional[int] = None,
    min_leaf: int = 1,
    seed: int = 0,
    feature_fraction: float = 1.0,
    order: Optional[np.ndarray] = None,
) -> TreeModel:
    """Greedy CART tree minimizing Gini impurity or squared error.

    Every split is the best over all (column, threshold) candidates, with
    thresholds at midpoints between consecutive distinct values. Nodes stop
    splitting when pure, at ``max_depth``, or when no split leaves
    ``min_leaf`` rows on both sides. Because nothing caps the leaf count,
    depth-first growth yields the same tree as best-first growth.

    Parameters
    ----------
    task : {"classify", "regress"}
    feature_fraction : float
        Fraction of columns drawn (using ``seed``) as split candidates at
        each node; 1.0 considers all of them.
    order : ndarray, optional
        Output of ``presort(X)``, to reuse across trees.
    """
    if task not in ("classify", "regress"):
        raise DomainError(f"unknown task {task!r}")
    X, y = _check_matrix(X, y)
    if min_leaf < 1 or (max_depth is not None and max_depth < 0):
        raise DomainError("min_leaf must be >= 1 and max_depth >= 0")
    if not 0 < feature_fraction <= 1:
        raise DomainError("feature_fraction must lie in (0, 1]")
    if X.shape[0] < max(min_leaf, 1):
        raise DataError(f"need at least {max(min_leaf, 1)} rows, got {X.shape[0]}")
    if task == "regress" and not np.all(np.isfinite(y.astype(float))):
        raise DataError("regression targets contain non-finite values")
    if order is None:
        order = presort(X)
    g = _Grower(X, y, task, max_depth, min_leaf, order, feature_fraction, np.random.default_rng(seed))
    g.grow(np.arange(X.shape[0]), 0, order, g.xsorted)
    feat, thr, left, right, value = zip(*g.nodes)
    return TreeModel(
        feature=np.asarray(feat, dtype=int),
        threshold=np.asarray(thr, dtype=float),
        left=np.asarray(left, dtype=int),
        right=np.asarray(right, dtype=int),
        value=np.asarray(value, dtype=float if task == "regress" else y.dtype),
        task=task,
        n_features=X.shape[1],
        max_depth=max_depth,
        min_leaf=min_leaf,
    )


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple
    seeds: tuple
    feature_fraction: float
    classes: np.ndarray
    tie_label: object = None

    def votes(self, X) -> np.ndarray:
        """Vote counts per class, shape (n_rows, n_classes)."""
        X = np.asarray(X, dtype=float)
        out = np.zeros((X.shape[0], self.classes.size), dtype=int)
        for tree in self.trees:
            pred = tree.predict(X)
            out[np.arange(X.shape[0]), np.searchsorted(self.classes, pred)] += 1
        return out

    def predict(self, X) -> np.ndarray:
        v = self.votes(X)
        winner = self.classes[np.argmax(v, axis=1)]
        if self.tie_label is not None and self.tie_label in self.classes:
            tied = (v == v.max(axis=1, keepdims=True)).sum(axis=1) > 1
            t = int(np.searchsorted(self.classes, self.tie_label))
            tie_ok = tied & (v[:, t] == v.max(axis=1))
            winner = np.where(tie_ok, self.tie_label, winner)
        return winner

    def to_dict(self) -> dict:
        return {
            "trees": [t.to_dict() for t in self.trees],
            "seeds": list(self.seeds),
            "feature_fraction": self.feature_fraction,
            "classes": self.classes.tolist(),
            "tie_label": None if self.tie_label is None else self.tie_label.item() if hasattr(self.tie_label, "item") else self.tie_label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        return cls(
            trees=tuple(TreeModel.from_dict(t) for t in d["trees"]),
            seeds=tuple(d["seeds"]),
            feature_fraction=d["feature_fraction"],
            classes=np.asarray(d["classes"]),
            tie_label=d["tie_label"],
        )


def train_random_forest(
    X,
    y,
    n_trees: int = 200,
    max_depth: Optional[int] = 8,
    feature_fraction: Optional[float] = None,
    seed: int = 0,
    bootstrap: bool = True,
    min_leaf: int = 1,
    tie_label=1,
) -> ForestModel:
    """Bagged CART classifiers with per-split column subsampling.

    ``feature_fraction`` defaults to sqrt(p)/p. Vote ties go to
    ``tie_label`` when it is among the tied classes (1 = Fail in the
    status encoding), otherwise to the lowest tied label.
    """
    X, y = _check_matrix(X, y)
    if X.shape[0] < 2:
        raise DataError("a forest needs at least 2 rows")
    if n_trees < 1:
        raise DomainError("n_trees must be >= 1")
    p = X.shape[1]
    if feature_fraction is None:
        feature_fraction = np.sqrt(p) / p
    seeds = np.random.SeedSequence(seed).generate_state(n_trees).tolist()
    trees = []
    full_order = None if bootstrap else presort(X)
    for s in seeds:
        rng = np.random.default_rng(s)
        if bootstrap:
            rows = rng.integers(0, X.shape[0], X.shape[0])
            Xb, yb, order = X[rows], y[rows], None
        else:
            Xb, yb, order = X, y, full_order
        trees.append(train_cart(Xb, yb, "classify", max_depth, min_leaf, int(rng.integers(2**32)), feature_fraction, order))
    return ForestModel(tuple(trees), tuple(seeds), float(feature_fraction), np.unique(y), tie_label)
