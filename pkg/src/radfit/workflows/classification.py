"""Cross-validated pass/fail prediction from static data and stress conditions."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from radfit.core import ContractError, DataError, DeviceId, DomainError
from radfit.ingest import PipelineFile
from radfit.learners import accuracy_score, balance_classes, canonical_kind, fit_classifier, make_device_folds
from radfit.learners.sampling import parse_strategy
from radfit.preprocess import DesignMatrix, assemble_design_matrix

STATUS_NAMES = {0: "Pass", 1: "Fail"}
GROUP_KEYS = ("manufacturer", "voltage")


@dataclass(frozen=True)
class DirectRunConfig:
    model: str = "boosting"
    balancing: str = "none"
    seed: int = 42
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "model", canonical_kind(self.model))
        parse_strategy(self.balancing)


@dataclass(frozen=True)
class DeviceOutcome:
    device_id: DeviceId
    fold: int
    true_status: str
    predicted_status: Optional[str]
    note: str = ""
    true_group: str = ""
    predicted_group: str = ""

    @property
    def scored(self) -> bool:
        return self.predicted_status is not None

    @property
    def correct(self) -> Optional[bool]:
        return None if self.predicted_status is None else self.predicted_status == self.true_status


@dataclass(frozen=True)
class EvaluationReport:
    """Per-device outcomes of a cross-validated run.

    ``training_ids`` maps each fold number (direct runs) or each test
    device (multi-step runs) to the devices its final model was trained on.
    """

    mode: str
    model: str
    outcomes: tuple
    fold_accuracies: dict
    skipped_folds: tuple = ()
    step1_accuracy: Optional[float] = None
    training_ids: dict = field(default_factory=dict)
    warnings: tuple = ()

    @property
    def scored(self) -> list:
        return [o for o in self.outcomes if o.scored]

    @property
    def overall_accuracy(self) -> float:
        s = self.scored
        if not s:
            return float("nan")
        return sum(o.correct for o in s) / len(s)

    def per_manufacturer_accuracy(self) -> dict:
        out = {}
        for m in sorted({o.device_id.manufacturer for o in self.scored}):
            s = [o for o in self.scored if o.device_id.manufacturer == m]
            out[m] = sum(o.correct for o in s) / len(s)
        return out

    def outcome_table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["device_id", "manufacturer", "device_number", "fold", "true_status", "predicted_status",
                    "correct", "true_group", "predicted_group", "note"])
        for o in self.outcomes:
            w.writerow([str(o.device_id), o.device_id.manufacturer, o.device_id.index, o.fold, o.true_status,
                        o.predicted_status or "", "" if o.correct is None else int(o.correct),
                        o.true_group, o.predicted_group, o.note])
        return buf.getvalue()

    def fold_table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "fold", "accuracy"])
        for k, acc in sorted(self.fold_accuracies.items()):
            w.writerow([self.model, k, repr(float(acc))])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", "model", "devices_scored", "devices_total", "overall_accuracy", "step1_accuracy", "skipped_folds"])
        w.writerow([self.mode, self.model, len(self.scored), len(self.outcomes), repr(self.overall_accuracy),
                    "" if self.step1_accuracy is None else repr(self.step1_accuracy),
                    " ".join(str(k) for k in self.skipped_folds)])
        return buf.getvalue()


def _fold_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])


def _status_matrix(pipeline: PipelineFile) -> DesignMatrix:
    if any(r.status.is_outlier for r in pipeline.rows):
        raise ContractError("run the workflows on outlier-free data")
    if not pipeline.rows:
        raise DataError("no devices to evaluate")
    return assemble_design_matrix(pipeline.rows, pipeline.grids, "status")


def run_direct_classification(pipeline: PipelineFile, config: DirectRunConfig = DirectRunConfig()) -> EvaluationReport:
    """Device-number folds; within each, balance the training rows, train,
    and predict the held-out devices. Single-class training folds are
    skipped and listed in the report."""
    dm = _status_matrix(pipeline)
    y = dm.y.astype(int)
    plan = make_device_folds(dm.ids)
    outcomes, fold_acc, skipped, provenance, warnings = [], {}, [], {}, []
    for f, number in enumerate(plan.fold_numbers):
        train, test = plan.split(dm.ids, f)
        test_idx = np.flatnonzero(test)
        if np.unique(y[train]).size < 2 or train.sum() < 2:
            skipped.append(number)
            outcomes += [DeviceOutcome(dm.ids[i], number, STATUS_NAMES[y[i]], None, "fold-skipped") for i in test_idx]
            continue
        seed = _fold_seed(config.seed, number)
        bal = balance_classes(dm.X[train], y[train], config.balancing, seed)
        warnings += [f"fold {number}: {w}" for w in bal.warnings]
        model = fit_classifier(config.model, bal.X, bal.y, config.hyperparameters, seed, tie_label=1)
        pred = np.asarray(model.predict(dm.X[test])).astype(int)
        fold_acc[number] = accuracy_score(pred, y[test])
        provenance[number] = tuple(dm.ids[i] for i in np.flatnonzero(train))
        outcomes += [DeviceOutcome(dm.ids[i], number, STATUS_NAMES[y[i]], STATUS_NAMES[p]) for i, p in zip(test_idx, pred)]
    outcomes.sort(key=lambda o: o.device_id)
    return EvaluationReport("direct", config.model, tuple(outcomes), fold_acc, tuple(skipped), None, provenance, tuple(warnings))


def group_labels(dm: DesignMatrix, group_key: str) -> tuple[np.ndarray, np.ndarray]:
    """Group label per row, and the predictor columns step 1 may use.

    The columns that spell out the group (the manufacturer one-hot block, or
    the bias-voltage column) are withheld from the step-1 classifier.
    """
    cols = np.array(dm.columns)
    if group_key == "manufacturer":
        labels = np.array([d.manufacturer for d in dm.ids])
        keep = ~np.char.startswith(cols.astype(str), "mfr_")
    elif group_key == "voltage":
        j = list(dm.columns).index("bias_voltage_v")
        labels = np.array([repr(float(v)) for v in dm.X[:, j]])
        keep = cols != "bias_voltage_v"
    else:
        raise DomainError(f"group_key must be one of {GROUP_KEYS}")
    return labels, keep


def run_multistep_classification(
    pipeline: PipelineFile, group_key: str = "manufacturer", config: DirectRunConfig = DirectRunConfig()
) -> EvaluationReport:
    """Predict the group of each held-out device, then its status with a
    model trained only on training devices of the predicted group.

    Only devices whose group was predicted correctly are scored; the rest
    are listed with note ``group-mispredicted``. A predicted group with
    fewer than two training devices marks the device ``unpredictable``.
    """
    dm = _status_matrix(pipeline)
    y = dm.y.astype(int)
    groups, keep = group_labels(dm, group_key)
    plan = make_device_folds(dm.ids)
    outcomes, fold_acc, provenance, warnings = [], {}, {}, []
    step1_hits = 0
    for f, number in enumerate(plan.fold_numbers):
        train, test = plan.split(dm.ids, f)
        seed = _fold_seed(config.seed, number)
        train_idx = np.flatnonzero(train)
        grouper = fit_classifier(config.model, dm.X[train][:, keep], groups[train], config.hyperparameters, seed)
        predicted_groups = np.asarray(grouper.predict(dm.X[test][:, keep]))
        fold_scores, group_models = [], {}
        for i, g in zip(np.flatnonzero(test), predicted_groups):
            step1_hits += g == groups[i]
            base = dict(device_id=dm.ids[i], fold=number, true_status=STATUS_NAMES[y[i]],
                        true_group=str(groups[i]), predicted_group=str(g))
            members = train_idx[groups[train_idx] == g]
            if members.size < 2:
                outcomes.append(DeviceOutcome(predicted_status=None, note="unpredictable", **base))
                continue
            if g != groups[i]:
                outcomes.append(DeviceOutcome(predicted_status=None, note="group-mispredicted", **base))
                continue
            if g not in group_models:
                strategy = config.balancing if np.unique(y[members]).size == 2 else "none"
                bal = balance_classes(dm.X[members], y[members], strategy, seed)
                warnings += [f"fold {number}, group {g}: {w}" for w in bal.warnings]
                group_models[g] = fit_classifier(config.model, bal.X, bal.y, config.hyperparameters, seed, tie_label=1)
            model = group_models[g]
            p = int(np.asarray(model.predict(dm.X[i : i + 1]))[0])
            provenance[dm.ids[i]] = tuple(dm.ids[k] for k in members)
            outcomes.append(DeviceOutcome(predicted_status=STATUS_NAMES[p], **base))
            fold_scores.append(p == y[i])
        if fold_scores:
            fold_acc[number] = float(np.mean(fold_scores))
    outcomes.sort(key=lambda o: o.device_id)
    step1 = step1_hits / len(dm.ids)
    return EvaluationReport(f"multistep:{group_key}", config.model, tuple(outcomes), fold_acc, (), step1, provenance, tuple(warnings))
