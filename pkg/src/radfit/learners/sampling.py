"""Class balancing by oversampling, undersampling or SMOTE."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from radfit.core import DataError, DomainError

_SMOTE_RE = re.compile(r"^smote(?:\((\d+)\))?$")


def parse_strategy(strategy: str) -> tuple[str, int]:
    """``"smote(3)"`` -> ("smote", 3); SMOTE defaults to k = 5."""
    s = strategy.strip().lower()
    m = _SMOTE_RE.match(s)
    if m:
        return "smote", int(m.group(1) or 5)
    if s in ("none", "oversample", "undersample"):
        return s, 0
    raise DomainError(f"unknown balancing strategy {strategy!r}")


@dataclass(frozen=True, eq=False)
class BalanceResult:
    """Balanced rows plus where each came from.

    ``source[i]`` is the input row copied into output row ``i``, or -1 for
    a synthetic row; synthetic row ``i`` equals
    ``X[base[i]] + gap[i] * (X[neighbor[i]] - X[base[i]])``.
    """

    X: np.ndarray
    y: np.ndarray
    source: np.ndarray
    base: np.ndarray
    neighbor: np.ndarray
    gap: np.ndarray
    warnings: tuple = field(default=())


def balance_classes(X, y, strategy: str = "none", seed: int = 0) -> BalanceResult:
    """Equalize the two class counts of a training set.

    ``oversample`` duplicates random minority rows, ``undersample`` keeps a
    random subset of majority rows, and ``smote(k)`` interpolates each new
    minority row between a random minority row and one of its ``k`` nearest
    minority neighbours. Outputs keep the original rows first, in order.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DataError("need a 2-D matrix and one label per row")
    kind, k = parse_strategy(strategy)
    n = X.shape[0]
    ident = BalanceResult(X.copy(), y.copy(), np.arange(n), np.full(n, -1), np.full(n, -1), np.zeros(n))
    if kind == "none":
        return ident
    labels, counts = np.unique(y, return_counts=True)
    if labels.size != 2:
        raise DataError(f"balancing needs exactly two classes, got {labels.size}")
    if counts[0] == counts[1]:
        return ident
    minority = labels[np.argmin(counts)]
    min_rows = np.flatnonzero(y == minority)
    maj_rows = np.flatnonzero(y != minority)
    deficit = maj_rows.size - min_rows.size
    rng = np.random.default_rng(seed)
    warnings: list[str] = []

    if kind == "undersample":
        keep = np.sort(np.concatenate([min_rows, rng.choice(maj_rows, min_rows.size, replace=False)]))
        m = keep.size
        return BalanceResult(X[keep], y[keep], keep, np.full(m, -1), np.full(m, -1), np.zeros(m))

    if kind == "smote" and min_rows.size == 1:
        warnings.append("single minority row: SMOTE fell back to oversampling")
        kind = "oversample"
    if kind == "oversample":
        extra = rng.choice(min_rows, deficit, replace=True)
        src = np.concatenate([np.arange(n), extra])
        m = src.size
        return BalanceResult(X[src], y[src], src, np.full(m, -1), np.full(m, -1), np.zeros(m), tuple(warnings))

    if k >= min_rows.size:
        warnings.append(f"SMOTE k reduced from {k} to {min_rows.size - 1}")
        k = min_rows.size - 1
    P = X[min_rows]
    d2 = ((P[:, None, :] - P[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
    base_pos = rng.integers(0, min_rows.size, deficit)
    nb_pos = nn[base_pos, rng.integers(0, k, deficit)]
    gap = rng.random(deficit)
    synth = P[base_pos] + gap[:, None] * (P[nb_pos] - P[base_pos])
    Xo = np.vstack([X, synth])
    yo = np.concatenate([y, np.full(deficit, minority, dtype=y.dtype)])
    source = np.concatenate([np.arange(n), np.full(deficit, -1)])
    base = np.concatenate([np.full(n, -1), min_rows[base_pos]])
    neighbor = np.concatenate([np.full(n, -1), min_rows[nb_pos]])
    gaps = np.concatenate([np.zeros(n), gap])
    return BalanceResult(Xo, yo, source, base, neighbor, gaps, tuple(warnings))
