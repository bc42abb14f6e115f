"""Run configuration shared by the command-line subcommands."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from radfit.core import DataError, DomainError
from radfit.learners import canonical_kind, hyperparameters
from radfit.learners.sampling import parse_strategy
from radfit.preprocess import OutlierRuleConfig
from radfit.workflows.classification import GROUP_KEYS, DirectRunConfig
from radfit.workflows.curves import CurveRunConfig

WORKFLOWS = ("direct", "multistep", "curve")


@dataclass(frozen=True)
class GridConfig:
    sweep_count: int = 101
    fluence_count: int = 241

    def __post_init__(self):
        if self.sweep_count < 2 or self.fluence_count < 2:
            raise DomainError("grids need at least 2 points")


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a run. Defaults reproduce the documented behaviour;
    ``outlier`` and ``hyperparameters`` hold overrides only."""

    seed: int = 42
    grids: GridConfig = field(default_factory=GridConfig)
    outlier: dict = field(default_factory=dict)
    drop_fraction: float = 0.9
    baseline_window: int = 5
    criterion_current: float = 1e-6
    workflow: str = "direct"
    model: str = "boosting"
    hyperparameters: dict = field(default_factory=dict)
    balancing: str = "none"
    group_key: str = "manufacturer"
    sampled_indices: Optional[tuple] = None
    strict_tolerance: float = 0.15
    flux: float = 1e6

    def __post_init__(self):
        if isinstance(self.grids, dict):
            object.__setattr__(self, "grids", _strict(GridConfig, self.grids, "grids"))
        if self.sampled_indices is not None:
            object.__setattr__(self, "sampled_indices", tuple(int(k) for k in self.sampled_indices))
        object.__setattr__(self, "model", canonical_kind(self.model))
        if self.workflow not in WORKFLOWS:
            raise DomainError(f"workflow must be one of {WORKFLOWS}")
        if self.group_key not in GROUP_KEYS:
            raise DomainError(f"group_key must be one of {GROUP_KEYS}")
        parse_strategy(self.balancing)
        self.outlier_config()
        kind = "boosting" if self.workflow == "curve" else self.model
        hyperparameters(kind, self.hyperparameters)
        if not 0 < self.drop_fraction < 1 or self.baseline_window < 1:
            raise DomainError("drop_fraction must lie in (0, 1) and baseline_window be >= 1")
        if not self.flux > 0 or not self.criterion_current > 0 or not self.strict_tolerance > 0:
            raise DomainError("flux, criterion current and tolerance must be positive")

    def outlier_config(self) -> OutlierRuleConfig:
        return _strict(OutlierRuleConfig, self.outlier, "outlier")

    def direct_config(self) -> DirectRunConfig:
        return DirectRunConfig(self.model, self.balancing, self.seed, dict(self.hyperparameters))

    def curve_config(self) -> CurveRunConfig:
        return CurveRunConfig(self.seed, self.sampled_indices, dict(self.hyperparameters), self.strict_tolerance,
                              self.drop_fraction, self.baseline_window, self.flux)

    def with_overrides(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_json(self) -> dict:
        d = asdict(self)
        d["sampled_indices"] = None if self.sampled_indices is None else list(self.sampled_indices)
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        return _strict(cls, doc, "config")


def _strict(cls, doc: dict, where: str):
    if not isinstance(doc, dict):
        raise DataError(f"{where}: expected a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise DataError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise DataError(f"{where}: {exc}") from None


def load_run_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    return RunConfig.from_json(doc)
