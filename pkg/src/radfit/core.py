"""Domain types, FIT/MTBF arithmetic and trace-based pass/fail classification."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

FIT_HOURS = 1e9
SECONDS_PER_HOUR = 60 * 60
STANDARD_FLUENCE = 6.0e9
TEMPERATURES_C = (25, 150)


class RadfitError(Exception):
    """Base class for all package errors."""


class DomainError(RadfitError, ValueError):
    """An argument lies outside the domain of an operation."""


class DataError(RadfitError, ValueError):
    """Input data is malformed or degenerate."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(DataError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ContractError(RadfitError):
    """A caller violated an operation's precondition on structure or schema."""


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


_ID_RE = re.compile(r"^([A-Z])_([1-9][0-9]*)$")


@dataclass(frozen=True, order=True)
class DeviceId:
    manufacturer: str
    index: int

    def __post_init__(self):
        if not (len(self.manufacturer) == 1 and "A" <= self.manufacturer <= "Z"):
            raise DomainError(f"manufacturer code must be one capital letter, got {self.manufacturer!r}")
        if int(self.index) < 1:
            raise DomainError(f"device index must be positive, got {self.index}")

    def __str__(self) -> str:
        return f"{self.manufacturer}_{self.index}"

    @classmethod
    def parse(cls, text: str) -> "DeviceId":
        m = _ID_RE.match(text.strip())
        if m is None:
            raise DataError(f"malformed device id {text!r}")
        return cls(m.group(1), int(m.group(2)))


@dataclass(frozen=True)
class StressCondition:
    temperature: float
    bias_voltage: float

    def __post_init__(self):
        if self.temperature not in TEMPERATURES_C:
            raise DomainError(f"temperature must be one of {TEMPERATURES_C} C, got {self.temperature}")
        if not self.bias_voltage > 0:
            raise DomainError(f"bias voltage must be positive, got {self.bias_voltage}")


class SweepKind(str, Enum):
    GATE_SOURCE = "gate_source_at_vds0"
    DRAIN_SOURCE = "drain_source_at_vgs0"
    THRESHOLD = "threshold_at_fixed_vds"


@dataclass(frozen=True, eq=False)
class IVSweep:
    """A static current-voltage sweep with strictly increasing voltages."""

    kind: SweepKind
    voltages: np.ndarray
    currents: np.ndarray
    fixed_voltage: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SweepKind(self.kind))
        v = _frozen(self.voltages)
        i = _frozen(self.currents)
        if v.ndim != 1 or v.shape != i.shape:
            raise DataError("sweep voltages and currents must be 1-D and equal length")
        if v.size < 2:
            raise DataError("sweep needs at least 2 points")
        if np.any(np.diff(v) <= 0):
            raise DataError("sweep voltages must be strictly increasing")
        if (self.kind is SweepKind.THRESHOLD) != (self.fixed_voltage is not None):
            raise DataError("fixed_voltage is required for threshold sweeps and only for them")
        object.__setattr__(self, "voltages", v)
        object.__setattr__(self, "currents", i)


@dataclass(frozen=True, eq=False)
class StressTrace:
    """Current measured against accumulated fluence during irradiation.

    Construction only checks shape; ``problems()`` lists violations of the
    physical invariants (non-negative, non-decreasing fluence, positive flux).
    """

    fluences: np.ndarray
    currents: np.ndarray
    flux: float

    def __post_init__(self):
        f = _frozen(self.fluences)
        i = _frozen(self.currents)
        if f.ndim != 1 or f.shape != i.shape:
            raise DataError("trace fluences and currents must be 1-D and equal length")
        if f.size < 2:
            raise DataError("trace needs at least 2 points")
        object.__setattr__(self, "fluences", f)
        object.__setattr__(self, "currents", i)
        object.__setattr__(self, "flux", float(self.flux))

    def __len__(self) -> int:
        return self.fluences.size

    def problems(self) -> list[str]:
        out = []
        if not (np.all(np.isfinite(self.fluences)) and np.all(np.isfinite(self.currents))):
            out.append("non-finite trace values")
        if np.any(self.fluences < 0):
            out.append("negative fluence")
        if np.any(np.diff(self.fluences) < 0):
            out.append("non-monotone fluence")
        if not self.flux > 0:
            out.append("non-positive flux")
        return out

    def with_points(self, fluences, currents) -> "StressTrace":
        return StressTrace(fluences, currents, self.flux)


class OutlierClass(str, Enum):
    LITTLE_DATA_AT_DECLINE = "LittleDataAtDecline"
    CURRENT_JUMP = "CurrentJump"
    INSTANT_CURRENT_DECLINE = "InstantCurrentDecline"
    CLOUD = "Cloud"
    ODD_CURVE = "OddCurve"
    ODD_BEGINNING_CURRENT = "OddBeginningCurrent"


@dataclass(frozen=True)
class DeviceStatus:
    """Pass, Fail, or Outlier carrying the outlier class."""

    label: str
    outlier_class: Optional[OutlierClass] = None

    def __post_init__(self):
        if self.label not in ("Pass", "Fail", "Outlier"):
            raise DomainError(f"unknown status {self.label!r}")
        if (self.label == "Outlier") != (self.outlier_class is not None):
            raise DomainError("outlier_class is required exactly for Outlier status")

    @classmethod
    def outlier(cls, kind: OutlierClass) -> "DeviceStatus":
        return cls("Outlier", OutlierClass(kind))

    @property
    def is_outlier(self) -> bool:
        return self.label == "Outlier"

    @property
    def failed(self) -> bool:
        return self.label == "Fail"

    def __str__(self) -> str:
        if self.outlier_class is None:
            return self.label
        return f"Outlier:{self.outlier_class.value}"

    @classmethod
    def parse(cls, text: str) -> "DeviceStatus":
        text = text.strip()
        if text.startswith("Outlier:"):
            try:
                return cls.outlier(OutlierClass(text.split(":", 1)[1]))
            except ValueError:
                raise DataError(f"unknown outlier class in {text!r}") from None
        if text in ("Pass", "Fail"):
            return cls(text)
        raise DataError(f"unknown status {text!r}")


PASS = DeviceStatus("Pass")
FAIL = DeviceStatus("Fail")


@dataclass(frozen=True, eq=False)
class DeviceRecord:
    """One tested device. ``pre_sweeps`` maps each ``SweepKind`` to its sweep."""

    id: DeviceId
    condition: StressCondition
    pre_sweeps: dict
    threshold_voltage: float
    trace: StressTrace
    status: DeviceStatus = PASS
    post_sweeps: Optional[dict] = None

    def problems(self) -> list[str]:
        out = [f"missing {k.value} sweep" for k in SweepKind if k not in self.pre_sweeps]
        if not math.isfinite(self.threshold_voltage):
            out.append("non-finite threshold voltage")
        return out + self.trace.problems()

    def replace(self, **changes) -> "DeviceRecord":
        fields = dict(
            id=self.id,
            condition=self.condition,
            pre_sweeps=self.pre_sweeps,
            threshold_voltage=self.threshold_voltage,
            trace=self.trace,
            status=self.status,
            post_sweeps=self.post_sweeps,
        )
        fields.update(changes)
        return DeviceRecord(**fields)


@dataclass(frozen=True)
class FitResult:
    failed_count: int
    total_count: int
    final_fluence: float
    flux: float
    fit: float
    mtbf: float = field(default=math.inf)

    @property
    def mtbf_infinite(self) -> bool:
        return math.isinf(self.mtbf)


def mtbf_from_fit(fit: float) -> float:
    """Mean time between failures in hours; ``math.inf`` when ``fit`` is zero."""
    if not fit >= 0:
        raise DomainError(f"FIT must be non-negative, got {fit}")
    if fit == 0:
        return math.inf
    return FIT_HOURS / fit


def compute_fit(failed_count: int, total_count: int, final_fluence: float, flux: float) -> FitResult:
    """Failures per 1e9 device-hours from a beam test.

    ``failed / (total * fluence)`` is the per-device cross section in cm^2;
    multiplying by the flux gives failures per second, and the factors
    3600 and 1e9 rescale that to failures per 1e9 hours.

    Parameters
    ----------
    failed_count, total_count : int
        Devices failing, and devices tested.
    final_fluence : float
        Fluence at the end of the test, n/cm^2.
    flux : float
        Beam flux, n/(cm^2 s).
    """
    if total_count <= 0:
        raise DomainError(f"total_count must be positive, got {total_count}")
    if not final_fluence > 0:
        raise DomainError(f"final_fluence must be positive, got {final_fluence}")
    if not flux > 0:
        raise DomainError(f"flux must be positive, got {flux}")
    if failed_count < 0 or failed_count > total_count:
        raise DomainError(f"failed_count must lie in [0, {total_count}], got {failed_count}")
    fit = failed_count / (total_count * final_fluence) * flux * SECONDS_PER_HOUR * FIT_HOURS
    return FitResult(
        failed_count=int(failed_count),
        total_count=int(total_count),
        final_fluence=float(final_fluence),
        flux=float(flux),
        fit=fit,
        mtbf=mtbf_from_fit(fit),
    )


def running_median(values: np.ndarray, window: int) -> np.ndarray:
    """Centered running median; windows are truncated at the ends."""
    values = np.asarray(values, dtype=float)
    n = values.size
    half = window // 2
    if n == 0 or half == 0:
        return values.copy()
    padded = np.pad(values, half, mode="constant", constant_values=np.nan)
    view = np.lib.stride_tricks.sliding_window_view(padded, 2 * half + 1)
    out = np.nanmedian(view, axis=1)
    return out


def classify_trace_status(
    trace: StressTrace, drop_fraction: float = 0.9, baseline_window: int = 5
) -> DeviceStatus:
    """Pass/Fail from a stress trace by a ratio test against its starting current.

    The baseline is the median current of the first ``baseline_window``
    points. The device fails when any 3-point running-median current falls
    below ``drop_fraction * baseline``.
    """
    if not 0 < drop_fraction < 1:
        raise DomainError(f"drop_fraction must lie in (0, 1), got {drop_fraction}")
    if not 1 <= baseline_window <= len(trace):
        raise DomainError(f"baseline_window must lie in [1, {len(trace)}], got {baseline_window}")
    baseline = float(np.median(trace.currents[:baseline_window]))
    if not baseline > 0:
        raise DataError(f"degenerate baseline current {baseline}")
    smoothed = running_median(trace.currents, 3)
    if np.any(smoothed < drop_fraction * baseline):
        return FAIL
    return PASS


class GridAxis(str, Enum):
    SWEEP_VOLTAGE = "sweep_voltage"
    FLUENCE = "fluence"


@dataclass(frozen=True, eq=False)
class BenchmarkGrid:
    """Shared x-axis positions so every device is sampled at the same points."""

    axis: GridAxis
    positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "axis", GridAxis(self.axis))
        p = _frozen(self.positions)
        if p.ndim != 1 or p.size < 2:
            raise DomainError("a grid needs at least 2 positions")
        if np.any(np.diff(p) <= 0):
            raise DomainError("grid positions must be strictly increasing")
        object.__setattr__(self, "positions", p)

    @property
    def start(self) -> float:
        return float(self.positions[0])

    @property
    def end(self) -> float:
        return float(self.positions[-1])

    @property
    def count(self) -> int:
        return int(self.positions.size)

    def __eq__(self, other):
        if not isinstance(other, BenchmarkGrid):
            return NotImplemented
        return self.axis == other.axis and np.array_equal(self.positions, other.positions)

    __hash__ = None
