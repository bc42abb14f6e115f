"""Stress-curve prediction with one boosted regressor per sampled fluence point."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from radfit.core import STANDARD_FLUENCE, ContractError, DataError, DomainError, running_median
from radfit.ingest import PipelineFile
from radfit.learners import BoostingModel, hyperparameters, make_device_folds, presort, train_gradient_boosting
from radfit.preprocess import DesignMatrix, assemble_design_matrix
from radfit.workflows.grading import (
    GeneralizedGrade,
    RelaxedGrade,
    StrictGrade,
    grade_generalized,
    grade_relaxed,
    grade_strict,
)


def default_sampled_indices(grid_count: int = 241, n_points: int = 25) -> tuple:
    """``n_points`` equally spaced indices from the first to the last grid point."""
    if n_points < 2 or grid_count < n_points:
        raise DomainError("need 2 <= n_points <= grid_count")
    idx = np.linspace(0, grid_count - 1, n_points)
    if not np.allclose(idx, np.round(idx)):
        raise DomainError(f"{n_points} points do not divide a {grid_count}-point grid evenly")
    return tuple(int(k) for k in np.round(idx))


@dataclass(frozen=True, eq=False)
class CurveModelBank:
    indices: tuple
    fluences: np.ndarray
    models: tuple
    columns: tuple
    manufacturers: tuple
    training_ids: tuple = ()

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.columns):
            raise ContractError(f"expected {len(self.columns)} predictor columns")
        return np.column_stack([m.raw_score(X) for m in self.models])

    def to_dict(self) -> dict:
        return {
            "indices": list(self.indices),
            "fluences": self.fluences.tolist(),
            "models": [m.to_dict() for m in self.models],
            "columns": list(self.columns),
            "manufacturers": list(self.manufacturers),
            "training_ids": [str(d) for d in self.training_ids],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CurveModelBank":
        from radfit.core import DeviceId

        return cls(
            tuple(d["indices"]),
            np.asarray(d["fluences"], dtype=float),
            tuple(BoostingModel.from_dict(m) for m in d["models"]),
            tuple(d["columns"]),
            tuple(d["manufacturers"]),
            tuple(DeviceId.parse(s) for s in d["training_ids"]),
        )


def _check_indices(indices: Sequence[int], grid_count: int) -> tuple:
    idx = tuple(int(k) for k in indices)
    if not idx or any(b <= a for a, b in zip(idx, idx[1:])):
        raise DomainError("sampled indices must be non-empty and strictly increasing")
    if idx[0] < 0 or idx[-1] >= grid_count:
        raise DomainError(f"sampled indices must lie in [0, {grid_count})")
    return idx


def train_curve_model_bank(
    pipeline: PipelineFile,
    sampled_indices: Optional[Sequence[int]] = None,
    gb_hyperparameters: Optional[dict] = None,
    train_ids=None,
    seed: int = 0,
) -> CurveModelBank:
    """One squared-loss boosting regressor per sampled fluence index.

    ``train_ids`` restricts training to those devices (a fold's training
    side); by default every pipeline row is used.
    """
    flu = pipeline.grids["flu"]
    idx = _check_indices(sampled_indices or default_sampled_indices(flu.count), flu.count)
    manufacturers = sorted({r.manufacturer for r in pipeline.rows})
    rows = pipeline.rows if train_ids is None else [r for r in pipeline.rows if r.device_id in set(train_ids)]
    if not rows:
        raise DomainError("empty training set")
    dm = assemble_design_matrix(rows, pipeline.grids, idx, manufacturers)
    hp = hyperparameters("boosting", gb_hyperparameters)
    order = presort(dm.X)
    models = tuple(train_gradient_boosting(dm.X, dm.y[:, j], "regress", seed=seed, order=order, **hp) for j in range(len(idx)))
    return CurveModelBank(idx, flu.positions[list(idx)], models, dm.columns, tuple(manufacturers), dm.ids)


def predict_stress_curve(bank: CurveModelBank, predictors) -> np.ndarray:
    """Predicted currents at the bank's sampled fluences, one row per device.

    ``predictors`` is a DesignMatrix (its column schema must match the
    bank's) or a bare predictor matrix.
    """
    if isinstance(predictors, DesignMatrix):
        if tuple(predictors.columns) != tuple(bank.columns):
            raise ContractError("predictor columns differ from the bank's training schema")
        predictors = predictors.X
    return bank.predict(np.atleast_2d(predictors))


def drop_index(curve, drop_fraction: float = 0.9, baseline_window: int = 5) -> Optional[int]:
    """First sample whose 3-point running median falls below the drop
    level, or None for a passing curve."""
    c = np.asarray(curve, dtype=float)
    below = np.flatnonzero(running_median(c, 3) < drop_fraction * np.median(c[:baseline_window]))
    return int(below[0]) if below.size else None


@dataclass(frozen=True)
class CurveRunConfig:
    seed: int = 42
    sampled_indices: Optional[tuple] = None
    hyperparameters: dict = field(default_factory=dict)
    strict_tolerance: float = 0.15
    drop_fraction: float = 0.9
    baseline_window: int = 5
    flux: float = 1e6


@dataclass(frozen=True, eq=False)
class DeviceCurveOutcome:
    device_id: object
    fold: int
    measured: np.ndarray
    predicted: np.ndarray
    strict: StrictGrade
    relaxed: RelaxedGrade


@dataclass(frozen=True, eq=False)
class CurveReport:
    fluences: np.ndarray
    outcomes: tuple
    generalized: GeneralizedGrade
    measured: GeneralizedGrade
    training_ids: dict

    @property
    def relaxed_agreement(self) -> float:
        return float(np.mean([o.relaxed.agree for o in self.outcomes]))

    @property
    def strict_pass_rate(self) -> float:
        return float(np.mean([o.strict.passed for o in self.outcomes]))

    def outcome_table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["device_id", "fold", "measured_status", "predicted_status", "relaxed_agree",
                    "strict_pass", "max_relative_error", "rmse"])
        for o in self.outcomes:
            w.writerow([str(o.device_id), o.fold, str(o.relaxed.measured_status), str(o.relaxed.predicted_status),
                        int(o.relaxed.agree), int(o.strict.passed), repr(float(o.strict.errors.max())), repr(o.strict.rmse)])
        return buf.getvalue()

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["device_id", "series", "fluence", "current"])
        for o in self.outcomes:
            for series, values in (("measured", o.measured), ("predicted", o.predicted)):
                for f, c in zip(self.fluences, values):
                    w.writerow([str(o.device_id), series, repr(float(f)), repr(float(c))])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["devices", "relaxed_agreement", "strict_pass_rate", "predicted_failures", "measured_failures",
                    "predicted_fit", "measured_fit"])
        w.writerow([len(self.outcomes), repr(self.relaxed_agreement), repr(self.strict_pass_rate),
                    self.generalized.n_failed, self.measured.n_failed,
                    repr(self.generalized.fit.fit), repr(self.measured.fit.fit)])
        return buf.getvalue()


def run_curve_prediction(pipeline: PipelineFile, config: CurveRunConfig = CurveRunConfig()) -> CurveReport:
    """Cross-validated curve prediction with strict, relaxed and generalized grading."""
    if any(r.status.is_outlier for r in pipeline.rows):
        raise ContractError("run the workflows on outlier-free data")
    if not pipeline.rows:
        raise DataError("no devices to evaluate")
    flu = pipeline.grids["flu"]
    idx = _check_indices(config.sampled_indices or default_sampled_indices(flu.count), flu.count)
    manufacturers = sorted({r.manufacturer for r in pipeline.rows})
    dm = assemble_design_matrix(pipeline.rows, pipeline.grids, idx, manufacturers)
    fluences = flu.positions[list(idx)]
    plan = make_device_folds(dm.ids)
    outcomes, provenance = [], {}
    for f, number in enumerate(plan.fold_numbers):
        train, test = plan.split(dm.ids, f)
        train_ids = [dm.ids[i] for i in np.flatnonzero(train)]
        bank = train_curve_model_bank(pipeline, idx, config.hyperparameters, train_ids, config.seed)
        provenance[number] = bank.training_ids
        pred = predict_stress_curve(bank, dm.X[test])
        for i, p in zip(np.flatnonzero(test), pred):
            meas = dm.y[i]
            outcomes.append(DeviceCurveOutcome(
                dm.ids[i], number, meas, p,
                grade_strict(p, meas, config.strict_tolerance),
                grade_relaxed(p, meas, config.drop_fraction, config.baseline_window, fluences, config.flux),
            ))
    outcomes.sort(key=lambda o: o.device_id)
    stack = lambda attr: np.array([getattr(o, attr) for o in outcomes])
    gen = grade_generalized(stack("predicted"), fluences, config.flux, config.drop_fraction, config.baseline_window, flu.end)
    meas = grade_generalized(stack("measured"), fluences, config.flux, config.drop_fraction, config.baseline_window, flu.end)
    return CurveReport(fluences, tuple(outcomes), gen, meas, provenance)
