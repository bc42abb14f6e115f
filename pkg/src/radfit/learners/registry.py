"""Learner dispatch by name, and JSON-ready model serialization."""
from __future__ import annotations

from typing import Optional

import numpy as np

from radfit.core import DomainError
from radfit.learners.boosting import BoostingModel, train_gradient_boosting
from radfit.learners.linear import LogisticModel, train_logistic
from radfit.learners.multiclass import OneVsRestModel, train_one_vs_rest
from radfit.learners.tree import ForestModel, TreeModel, train_random_forest

MODEL_KINDS = ("logistic", "forest", "boosting")
MODEL_ALIASES = {"lr": "logistic", "rf": "forest", "gb": "boosting", "xgb": "boosting"}

DEFAULT_HYPERPARAMETERS = {
    "logistic": {"l2": 1e-3, "epochs": 500, "step_size": 1.0},
    "forest": {"n_trees": 200, "max_depth": 8, "feature_fraction": None},
    "boosting": {"n_stages": 200, "learning_rate": 0.1, "max_depth": 3},
}


def canonical_kind(kind: str) -> str:
    kind = MODEL_ALIASES.get(kind, kind)
    if kind not in MODEL_KINDS:
        raise DomainError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return kind


def hyperparameters(kind: str, overrides: Optional[dict] = None) -> dict:
    kind = canonical_kind(kind)
    hp = dict(DEFAULT_HYPERPARAMETERS[kind])
    unknown = set(overrides or {}) - set(hp)
    if unknown:
        raise DomainError(f"unknown {kind} hyperparameters: {sorted(unknown)}")
    hp.update(overrides or {})
    return hp


def _binary(kind: str, hp: dict, seed: int):
    if kind == "logistic":
        return lambda X, y: train_logistic(X, y, seed=seed, **hp)
    return lambda X, y: train_gradient_boosting(X, y, "classify", seed=seed, **hp)


def fit_classifier(kind: str, X, y, overrides: Optional[dict] = None, seed: int = 0, tie_label=None):
    """Train a classifier of ``kind`` whose ``predict`` returns labels of ``y``.

    Logistic and boosting models are binary, so label sets other than
    {0, 1} go through one-vs-rest. Forests handle any label set; their vote
    ties go to ``tie_label`` when given.
    """
    kind = canonical_kind(kind)
    hp = hyperparameters(kind, overrides)
    y = np.asarray(y)
    classes = np.unique(y)
    if kind == "forest":
        if classes.size == 1:
            return OneVsRestModel(classes, ())
        return train_random_forest(X, y, seed=seed, tie_label=tie_label, **hp)
    if classes.size == 2 and set(classes.tolist()) == {0, 1}:
        return _binary(kind, hp, seed)(X, y)
    return train_one_vs_rest(X, y, _binary(kind, hp, seed))


def model_to_dict(model) -> dict:
    if isinstance(model, LogisticModel):
        return {"type": "logistic", **model.to_dict()}
    if isinstance(model, BoostingModel):
        return {"type": "boosting", **model.to_dict()}
    if isinstance(model, ForestModel):
        return {"type": "forest", **model.to_dict()}
    if isinstance(model, TreeModel):
        return {"type": "tree", **model.to_dict()}
    if isinstance(model, OneVsRestModel):
        return {"type": "one_vs_rest", "classes": model.classes.tolist(), "models": [model_to_dict(m) for m in model.models]}
    raise DomainError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("type")
    if kind == "one_vs_rest":
        return OneVsRestModel(np.asarray(d["classes"]), tuple(model_from_dict(m) for m in d["models"]))
    table = {"logistic": LogisticModel, "boosting": BoostingModel, "forest": ForestModel, "tree": TreeModel}
    if kind not in table:
        raise DomainError(f"unknown model type {kind!r}")
    return table[kind].from_dict(d)
