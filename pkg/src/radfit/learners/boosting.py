"""Gradient-boosted regression trees for squared and logistic loss."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from radfit.core import DataError, DomainError
from radfit.learners.tree import TreeModel, _check_matrix, presort, train_cart

_PROB_CLIP = 1e-6


def _loss(task: str, y: np.ndarray, raw: np.ndarray) -> float:
    if task == "regress":
        return float(0.5 * np.mean((y - raw) ** 2))
    # mean binary cross-entropy written in terms of the raw score
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


@dataclass(frozen=True, eq=False)
class BoostingModel:
    """Additive model ``H0 + learning_rate * sum(stage trees)``.

    For ``task == "classify"`` the raw score is a log-odds and labels are
    0/1; ``predict_proba`` maps it through the sigmoid.
    """

    init: float
    stages: tuple
    learning_rate: float
    task: str
    train_loss: tuple = ()

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    def raw_score(self, X, n_stages: Optional[int] = None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[0], self.init)
        for tree in self.stages[:n_stages]:
            out += self.learning_rate * tree.predict(X)
        return out

    def staged_raw_scores(self, X):
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[0], self.init)
        yield out.copy()
        for tree in self.stages:
            out += self.learning_rate * tree.predict(X)
            yield out.copy()

    def predict_proba(self, X) -> np.ndarray:
        if self.task != "classify":
            raise DomainError("probabilities exist only for classification models")
        return expit(self.raw_score(X))

    def predict(self, X) -> np.ndarray:
        raw = self.raw_score(X)
        if self.task == "classify":
            return (raw > 0).astype(int)
        return raw

    def truncated(self, n_stages: int) -> "BoostingModel":
        return BoostingModel(self.init, self.stages[:n_stages], self.learning_rate, self.task, self.train_loss[: n_stages + 1])

    def to_dict(self) -> dict:
        return {
            "init": self.init,
            "stages": [t.to_dict() for t in self.stages],
            "learning_rate": self.learning_rate,
            "task": self.task,
            "train_loss": list(self.train_loss),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostingModel":
        return cls(d["init"], tuple(TreeModel.from_dict(t) for t in d["stages"]), d["learning_rate"], d["task"], tuple(d["train_loss"]))


def train_gradient_boosting(
    X,
    y,
    task: str = "regress",
    n_stages: int = 200,
    learning_rate: float = 0.1,
    max_depth: Optional[int] = 3,
    seed: int = 0,
    min_leaf: int = 1,
    order: Optional[np.ndarray] = None,
) -> BoostingModel:
    """Stage-wise fit of regression trees to the negative loss gradient.

    Squared loss: ``H0`` is the target mean and each stage fits the plain
    residuals ``y - H``. Logistic loss (``task="classify"``, labels 0/1):
    ``H0`` is the log-odds of the base rate and each stage fits
    ``y - sigmoid(H)``. Leaves hold the mean gradient (a first-order step,
    no Newton weighting). ``train_loss[i]`` is the loss after ``i`` stages.

    ``seed`` is accepted for interface uniformity; with all columns
    considered at every split the fit is deterministic.
    """
    if task not in ("classify", "regress"):
        raise DomainError(f"unknown task {task!r}")
    if n_stages < 1:
        raise DomainError("n_stages must be >= 1")
    if not 0 < learning_rate <= 1:
        raise DomainError("learning_rate must lie in (0, 1]")
    X, y = _check_matrix(X, y)
    if X.shape[0] < 1:
        raise DataError("need at least one row")
    y = y.astype(float)
    if not np.all(np.isfinite(y)):
        raise DataError("targets contain non-finite values")
    if task == "classify":
        if not np.all((y == 0) | (y == 1)):
            raise DataError("classification targets must be 0/1")
        rate = np.clip(y.mean(), _PROB_CLIP, 1 - _PROB_CLIP)
        init = float(np.log(rate / (1 - rate)))
    else:
        init = float(y.mean())
    if order is None:
        order = presort(X)

    raw = np.full(y.size, init)
    losses = [_loss(task, y, raw)]
    stages = []
    for i in range(n_stages):
        grad = y - (expit(raw) if task == "classify" else raw)
        tree = train_cart(X, grad, "regress", max_depth, min_leaf, seed + i, 1.0, order)
        raw = raw + learning_rate * tree.predict(X)
        stages.append(tree)
        losses.append(_loss(task, y, raw))
    return BoostingModel(init, tuple(stages), float(learning_rate), task, tuple(losses))
