"""L2-regularized logistic regression by full-batch gradient descent."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from radfit.core import DataError, DomainError


def logistic_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float) -> tuple[float, np.ndarray, float]:
    """Mean cross-entropy plus ``0.5 * l2 * |w|^2``, with its gradient.

    Returns ``(loss, dloss/dw, dloss/db)``.
    """
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))
    r = (expit(z) - y) / y.size
    return loss, X.T @ r + l2 * w, float(r.sum())


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """Decision function ``sigmoid(weights . x + bias)`` on raw features."""

    weights: np.ndarray
    bias: float
    l2_strength: float
    train_loss: tuple = ()

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(int)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias, "l2_strength": self.l2_strength, "train_loss": list(self.train_loss)}

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        return cls(np.asarray(d["weights"], dtype=float), d["bias"], d["l2_strength"], tuple(d["train_loss"]))


def train_logistic(X, y, l2: float = 1e-3, epochs: int = 500, step_size: float = 1.0, seed: int = 0) -> LogisticModel:
    """Gradient descent on the regularized logistic loss.

    Columns are standardized internally (constant columns are left
    unscaled) and the penalty applies to the standardized weights; the
    returned weights act on raw features. A step that would raise the loss
    is retried at half the size, so ``train_loss`` never increases.
    ``seed`` is accepted for interface uniformity; the start point is zero.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or y.shape != (X.shape[0],):
        raise DataError("need a 2-D matrix with at least one row and one label per row")
    if not np.all(np.isfinite(X)):
        raise DataError("feature matrix contains non-finite values")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be 0/1")
    if l2 < 0 or epochs < 0 or not step_size > 0:
        raise DomainError("l2 and epochs must be non-negative and step_size positive")

    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Z = (X - mu) / sd
    w = np.zeros(X.shape[1])
    b = 0.0
    loss, gw, gb = logistic_objective(w, b, Z, y, l2)
    losses = [loss]
    step = step_size
    for _ in range(epochs):
        while True:
            w_new, b_new = w - step * gw, b - step * gb
            new_loss, new_gw, new_gb = logistic_objective(w_new, b_new, Z, y, l2)
            if new_loss <= loss or step < 1e-12:
                break
            step *= 0.5
        if new_loss > loss:
            break
        w, b, loss, gw, gb = w_new, b_new, new_loss, new_gw, new_gb
        losses.append(loss)
    weights = w / sd
    return LogisticModel(weights, float(b - weights @ mu), float(l2), tuple(losses))
