"""Grading predicted stress curves against measured ones."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from radfit.core import (
    STANDARD_FLUENCE,
    ContractError,
    DeviceStatus,
    FitResult,
    StressTrace,
    classify_trace_status,
    compute_fit,
)

RELATIVE_FLOOR = 1e-12  # A


@dataclass(frozen=True, eq=False)
class StrictGrade:
    errors: np.ndarray
    tolerance: float
    rmse: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.errors <= self.tolerance))


@dataclass(frozen=True)
class RelaxedGrade:
    predicted_status: DeviceStatus
    measured_status: DeviceStatus

    @property
    def agree(self) -> bool:
        return self.predicted_status == self.measured_status


@dataclass(frozen=True, eq=False)
class GeneralizedGrade:
    fit: FitResult
    statuses: tuple

    @property
    def n_failed(self) -> int:
        return sum(s.failed for s in self.statuses)


def grade_strict(predicted, measured, point_tolerance: float = 0.15) -> StrictGrade:
    """Pointwise relative error ``|p - m| / max(|m|, 1e-12)`` against a tolerance."""
    p = np.asarray(predicted, dtype=float)
    m = np.asarray(measured, dtype=float)
    if p.shape != m.shape:
        raise ContractError(f"curves differ in length: {p.shape} vs {m.shape}")
    err = np.abs(p - m) / np.maximum(np.abs(m), RELATIVE_FLOOR)
    return StrictGrade(err, float(point_tolerance), float(np.sqrt(np.mean((p - m) ** 2))))


def _as_trace(curve, fluences, flux) -> StressTrace:
    if isinstance(curve, StressTrace):
        return curve
    return StressTrace(fluences, curve, flux)


def grade_relaxed(predicted, measured, drop_fraction: float = 0.9, baseline_window: int = 5,
                  fluences=None, flux: float = 1.0) -> RelaxedGrade:
    """Compare the pass/fail status each curve implies.

    Curves may be traces or current arrays sampled at ``fluences``.
    """
    pt = _as_trace(predicted, fluences, flux)
    mt = _as_trace(measured, fluences, flux)
    return RelaxedGrade(
        classify_trace_status(pt, drop_fraction, baseline_window),
        classify_trace_status(mt, drop_fraction, baseline_window),
    )


def grade_generalized(curves, fluences, flux: float, drop_fraction: float = 0.9, baseline_window: int = 5,
                      final_fluence: float = STANDARD_FLUENCE) -> GeneralizedGrade:
    """Treat predicted curves as measurements: label each, then compute the
    cohort FIT with the benchmark end as the final fluence."""
    curves = np.atleast_2d(np.asarray(curves, dtype=float))
    statuses = tuple(
        classify_trace_status(StressTrace(fluences, c, flux), drop_fraction, baseline_window) for c in curves
    )
    failed = sum(s.failed for s in statuses)
    return GeneralizedGrade(compute_fit(failed, len(statuses), final_fluence, flux), statuses)
