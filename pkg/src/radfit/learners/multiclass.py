"""One-vs-rest wrapper turning binary learners into multiclass ones."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from radfit.core import DataError


@dataclass(frozen=True, eq=False)
class OneVsRestModel:
    """One binary scorer per class; the highest score wins, ties to the
    lowest label. A class present alone gets no scorer."""

    classes: np.ndarray
    models: tuple

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.classes.size == 1:
            return np.ones((X.shape[0], 1))
        return np.column_stack([m.predict_proba(X) for m in self.models])

    def predict(self, X) -> np.ndarray:
        return self.classes[np.argmax(self.scores(X), axis=1)]


def train_one_vs_rest(X, y, fit_binary: Callable) -> OneVsRestModel:
    """``fit_binary(X, labels01)`` must return a model with ``predict_proba``."""
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size == 0:
        raise DataError("no labels")
    if classes.size == 1:
        return OneVsRestModel(classes, ())
    return OneVsRestModel(classes, tuple(fit_binary(X, (y == c).astype(int)) for c in classes))
