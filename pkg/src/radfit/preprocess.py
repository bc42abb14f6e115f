"""Outlier screening, benchmark-grid resampling and design-matrix assembly."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from radfit.core import (
    FAIL,
    STANDARD_FLUENCE,
    BenchmarkGrid,
    ContractError,
    DataError,
    DeviceRecord,
    DeviceStatus,
    DomainError,
    GridAxis,
    IVSweep,
    OutlierClass,
    StressTrace,
    SweepKind,
    classify_trace_status,
    running_median,
)
from radfit.ingest import PIPELINE_BLOCKS, PipelineFile, PipelineRow

MAD_FLOOR = 1e-12

# detector priority; the first matching rule wins
OUTLIER_PRIORITY = (
    OutlierClass.INSTANT_CURRENT_DECLINE,
    OutlierClass.LITTLE_DATA_AT_DECLINE,
    OutlierClass.CURRENT_JUMP,
    OutlierClass.CLOUD,
    OutlierClass.ODD_BEGINNING_CURRENT,
    OutlierClass.ODD_CURVE,
)


# ------------------------------------------------------------------ grids


def build_benchmark_grid(axis, start: float, end: float, count: int, spacing: str = "linear") -> BenchmarkGrid:
    if not start < end:
        raise DomainError(f"grid needs start < end, got [{start}, {end}]")
    if count < 2:
        raise DomainError(f"grid needs at least 2 points, got {count}")
    if spacing == "linear":
        positions = np.linspace(start, end, count)
    elif spacing == "log":
        if not start > 0:
            raise DomainError("log spacing needs a positive start")
        positions = np.geomspace(start, end, count)
    else:
        raise DomainError(f"unknown spacing {spacing!r}")
    positions[0], positions[-1] = start, end
    return BenchmarkGrid(axis, positions)


def default_fluence_grid(count: int = 241, end: float = STANDARD_FLUENCE) -> BenchmarkGrid:
    return build_benchmark_grid(GridAxis.FLUENCE, 0.0, end, count)


def sweep_grid_for(sweeps: Sequence[IVSweep], count: int = 101) -> BenchmarkGrid:
    """Linear grid over the voltage range every sweep covers."""
    if not sweeps:
        raise DataError("no sweeps to derive a grid from")
    start = max(float(s.voltages[0]) for s in sweeps)
    end = min(float(s.voltages[-1]) for s in sweeps)
    if not start < end:
        raise DataError(f"sweeps share no common voltage range ({start} >= {end})")
    return build_benchmark_grid(GridAxis.SWEEP_VOLTAGE, start, end, count)


def _collapse_duplicates(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if np.all(np.diff(x) > 0):
        return x, y
    uniq, inverse = np.unique(x, return_inverse=True)
    return uniq, np.bincount(inverse, weights=y) / np.bincount(inverse)


def resample_to_grid(x, y, grid: BenchmarkGrid, method: str = "piecewise_linear") -> np.ndarray:
    """Evaluate a sampled series at the grid positions.

    Inside the observed range the series is interpolated (piecewise linear,
    or monotone cubic via PCHIP). Outside it the nearest observed value is
    held, which pads short traces with their last recorded current. Points
    beyond the grid are discarded except the one bracketing the grid end, and
    grid positions that coincide with an observation return it unchanged.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape or x.size < 2:
        raise DataError("series needs at least 2 points with matching x and y")
    if np.any(np.diff(x) < 0):
        raise DataError("series x must be non-decreasing")
    x, y = _collapse_duplicates(x, y)
    if x.size < 2:
        raise DataError("series has a single distinct x")

    lo = max(np.searchsorted(x, grid.start, side="right") - 1, 0)
    hi = min(np.searchsorted(x, grid.end, side="left") + 1, x.size)
    if hi - lo >= 2:
        x, y = x[lo:hi], y[lo:hi]

    pos = grid.positions
    if method == "piecewise_linear":
        out = np.interp(pos, x, y)
    elif method == "monotone_cubic":
        out = PchipInterpolator(x, y, extrapolate=False)(pos)
        out[pos < x[0]] = y[0]
        out[pos > x[-1]] = y[-1]
    else:
        raise DomainError(f"unknown interpolation method {method!r}")

    idx = np.clip(np.searchsorted(x, pos), 0, x.size - 1)
    exact = x[idx] == pos
    out[exact] = y[idx[exact]]
    return out


def standardize_fluence(trace: StressTrace, end: float = STANDARD_FLUENCE) -> StressTrace:
    """Cut or extend a trace so that it stops exactly at ``end``.

    Longer traces are cut with a point added at ``end`` (interpolated);
    shorter ones get a point at ``end`` carrying the last recorded current.
    """
    f, i = trace.fluences, trace.currents
    keep = f < end
    if keep.sum() == f.size:
        end_current = i[-1]
    else:
        hit = np.flatnonzero(f == end)
        end_current = i[hit[0]] if hit.size else np.interp(end, f, i)
    return trace.with_points(np.append(f[keep], end), np.append(i[keep], end_current))


# --------------------------------------------------------------- outliers


def _single_pass_mask(c: np.ndarray, mad_multiplier: float, window: int) -> np.ndarray:
    half = window // 2
    padded = np.pad(c, half, mode="constant", constant_values=np.nan)
    view = np.lib.stride_tricks.sliding_window_view(padded, window)
    med = np.nanmedian(view, axis=1)
    mad = np.nanmedian(np.abs(view - med[:, None]), axis=1)
    mask = np.abs(c - med) > mad_multiplier * np.maximum(mad, MAD_FLOOR)
    mask[0] = mask[-1] = False
    return mask


def point_outlier_mask(currents, mad_multiplier: float = 5.0, window: int = 5, max_passes: int = 10) -> np.ndarray:
    """True where a point deviates from its running median by more than
    ``mad_multiplier`` running MADs. End points are never flagged.

    The test is repeated on the surviving points until nothing more is
    removed (at most ``max_passes`` times), so that neighbouring outliers
    which shield each other in one pass are caught in the next.
    """
    if window < 3 or window % 2 == 0:
        raise DomainError(f"window must be odd and >= 3, got {window}")
    c = np.asarray(currents, dtype=float)
    keep = np.arange(c.size)
    for _ in range(max_passes):
        if keep.size < window:
            break
        drop = _single_pass_mask(c[keep], mad_multiplier, window)
        if not drop.any():
            break
        keep = keep[~drop]
    mask = np.ones(c.size, dtype=bool)
    mask[keep] = False
    return mask


def filter_point_outliers(
    trace: StressTrace, mad_multiplier: float = 5.0, window: int = 5, max_passes: int = 10
) -> StressTrace:
    """Drop isolated current readings that break from the local trend."""
    mask = point_outlier_mask(trace.currents, mad_multiplier, window, max_passes)
    if not mask.any():
        return trace
    return trace.with_points(trace.fluences[~mask], trace.currents[~mask])


@dataclass(frozen=True)
class OutlierRuleConfig:
    """Thresholds of the outlier-device rules.

    The beginning-current band is relative to ``reference_current``
    (normally the corpus median baseline); the rule is skipped while the
    reference is unset.
    """

    jump_ratio: float = 3.0
    cloud_fraction: float = 0.2
    rise_frac: float = 0.5
    min_decline_points: int = 3
    i0_band: tuple = (0.1, 10.0)
    reference_current: Optional[float] = None
    mad_multiplier: float = 5.0
    window: int = 5
    baseline_window: int = 5
    decline_level: float = 0.9
    instant_decline_level: float = 0.5
    instant_decline_fluence: float = 0.05
    fluence_end: float = STANDARD_FLUENCE

    def __post_init__(self):
        numbers = [
            self.jump_ratio, self.cloud_fraction, self.rise_frac, self.min_decline_points,
            *self.i0_band, self.mad_multiplier, self.window, self.baseline_window,
            self.decline_level, self.instant_decline_level, self.instant_decline_fluence,
            self.fluence_end,
        ]
        if self.reference_current is not None:
            numbers.append(self.reference_current)
        if any(not v > 0 for v in numbers):
            raise DomainError("outlier rule thresholds must be positive")
        object.__setattr__(self, "i0_band", tuple(self.i0_band))

    @property
    def i0_lo(self) -> Optional[float]:
        return None if self.reference_current is None else self.i0_band[0] * self.reference_current

    @property
    def i0_hi(self) -> Optional[float]:
        return None if self.reference_current is None else self.i0_band[1] * self.reference_current

    def with_reference(self, reference_current: float) -> "OutlierRuleConfig":
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw["reference_current"] = float(reference_current)
        return OutlierRuleConfig(**kw)


def trace_baseline(trace: StressTrace, config: OutlierRuleConfig = OutlierRuleConfig()) -> float:
    """Median starting current after point-outlier removal."""
    filtered = filter_point_outliers(trace, config.mad_multiplier, config.window)
    return float(np.median(filtered.currents[: config.baseline_window]))


def _has_level_jump(s: np.ndarray, ratio: float, width: int) -> bool:
    """True when every current in some block of ``width`` points exceeds
    ``ratio`` times every current in the block just before it."""
    if s.size < 2 * width:
        return bool(np.any(s[1:] > ratio * np.maximum(s[:-1], 0.0)))
    blocks = np.lib.stride_tricks.sliding_window_view(s, width)
    before = blocks[:-width].max(axis=1)
    after = blocks[width:].min(axis=1)
    return bool(np.any(after > ratio * np.maximum(before, 0.0)))


def classify_device_outlier(trace: StressTrace, config: OutlierRuleConfig = OutlierRuleConfig()) -> Optional[OutlierClass]:
    """First matching outlier class in ``OUTLIER_PRIORITY`` order, or None.

    Every rule except Cloud looks at the point-outlier-filtered trace after a
    running median of ``config.window`` points. The decline is the stretch
    from the first point below ``decline_level * baseline`` to the first
    point within 10% (of the fall) of the lowest later current; too few
    samples there means the decline was barely recorded. Dips after which
    the current mostly recovers are not declines. A current jump is
    a sustained upward level shift by more than ``jump_ratio``.
    """
    mask = point_outlier_mask(trace.currents, config.mad_multiplier, config.window)
    f = trace.fluences[~mask]
    s = running_median(trace.currents[~mask], config.window)
    baseline = float(np.median(trace.currents[~mask][: config.baseline_window]))
    if not baseline > 0:
        return OutlierClass.ODD_BEGINNING_CURRENT

    early = f < config.instant_decline_fluence * config.fluence_end
    if np.any(s[early] < config.instant_decline_level * baseline):
        return OutlierClass.INSTANT_CURRENT_DECLINE

    hi = config.decline_level * baseline
    below = np.flatnonzero(s < hi)
    # a decline counts only when the current mostly stays down afterwards
    if below.size and np.mean(s[below[0]:] < hi) >= 0.5:
        k0 = below[0]
        bottom = float(s[k0:].min())
        lo = bottom + 0.1 * (hi - bottom)
        k1 = k0 + int(np.argmax(s[k0:] <= lo))
        if k1 - k0 < config.min_decline_points:
            return OutlierClass.LITTLE_DATA_AT_DECLINE

    if _has_level_jump(s, config.jump_ratio, config.window):
        return OutlierClass.CURRENT_JUMP

    if mask.mean() > config.cloud_fraction:
        return OutlierClass.CLOUD

    if config.reference_current is not None and not config.i0_lo <= baseline <= config.i0_hi:
        return OutlierClass.ODD_BEGINNING_CURRENT

    if below.size and np.any(s[below[0]:] > (1 + config.rise_frac) * baseline):
        return OutlierClass.ODD_CURVE
    return None


# -------------------------------------------------------- static features


def extract_threshold_voltage(sweep: IVSweep, criterion_current: float = 1e-6) -> float:
    """Gate voltage where the current first reaches ``criterion_current``.

    Linear interpolation between the bracketing samples.
    """
    v, i = sweep.voltages, sweep.currents
    hits = np.flatnonzero(i >= criterion_current)
    if hits.size == 0:
        raise DataError(f"sweep never reaches the criterion current {criterion_current:g} A")
    j = hits[0]
    if i[j] == criterion_current:
        return float(v[j])
    if j == 0:
        raise DataError(f"sweep starts above the criterion current {criterion_current:g} A")
    return float(v[j - 1] + (criterion_current - i[j - 1]) * (v[j] - v[j - 1]) / (i[j] - i[j - 1]))


@dataclass(frozen=True)
class PipelineGrids:
    vgsigs: BenchmarkGrid
    vdsids: BenchmarkGrid
    flu: BenchmarkGrid

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in PIPELINE_BLOCKS}


def default_grids(records: Sequence[DeviceRecord], sweep_count: int = 101, fluence_count: int = 241) -> PipelineGrids:
    return PipelineGrids(
        vgsigs=sweep_grid_for([r.pre_sweeps[SweepKind.GATE_SOURCE] for r in records], sweep_count),
        vdsids=sweep_grid_for([r.pre_sweeps[SweepKind.DRAIN_SOURCE] for r in records], sweep_count),
        flu=default_fluence_grid(fluence_count),
    )


def benchmark_record(
    record: DeviceRecord,
    grids: PipelineGrids,
    sweep_method: str = "monotone_cubic",
    trace_method: str = "piecewise_linear",
) -> PipelineRow:
    """Resample one device onto the benchmark grids."""
    gs = record.pre_sweeps[SweepKind.GATE_SOURCE]
    ds = record.pre_sweeps[SweepKind.DRAIN_SOURCE]
    trace = standardize_fluence(record.trace, grids.flu.end)
    return PipelineRow(
        device_id=record.id,
        temperature=float(record.condition.temperature),
        bias_voltage=float(record.condition.bias_voltage),
        avg_vth=float(record.threshold_voltage),
        vgsigs=resample_to_grid(gs.voltages, gs.currents, grids.vgsigs, sweep_method),
        vdsids=resample_to_grid(ds.voltages, ds.currents, grids.vdsids, sweep_method),
        flu=resample_to_grid(trace.fluences, trace.currents, grids.flu, trace_method),
        status=record.status,
    )


@dataclass
class PreprocessResult:
    pipeline: PipelineFile
    records: list  # every input record with its assigned status
    outliers: dict = field(default_factory=dict)  # DeviceId -> OutlierClass

    @property
    def rows(self) -> tuple:
        return self.pipeline.rows


def preprocess_records(
    records: Sequence[DeviceRecord],
    outlier_config: OutlierRuleConfig = OutlierRuleConfig(),
    drop_fraction: float = 0.9,
    baseline_window: int = 5,
    sweep_count: int = 101,
    fluence_count: int = 241,
    criterion_current: float = 1e-6,
) -> PreprocessResult:
    """Screen outliers, label pass/fail, and benchmark the remaining devices.

    Point outliers are removed before anything else looks at a trace. The
    beginning-current band is anchored at the corpus median baseline unless
    the config already carries a reference. Outlier devices keep their
    status in ``records`` but are left out of the pipeline rows.
    """
    records = sorted(records, key=lambda r: r.id)
    if outlier_config.reference_current is None and records:
        outlier_config = outlier_config.with_reference(
            float(np.median([trace_baseline(r.trace, outlier_config) for r in records]))
        )

    labelled, outliers = [], {}
    for rec in records:
        kind = classify_device_outlier(rec.trace, outlier_config)
        if kind is not None:
            outliers[rec.id] = kind
            labelled.append(rec.replace(status=DeviceStatus.outlier(kind)))
            continue
        trace = filter_point_outliers(rec.trace, outlier_config.mad_multiplier, outlier_config.window)
        status = classify_trace_status(standardize_fluence(trace, outlier_config.fluence_end), drop_fraction, baseline_window)
        vth = rec.threshold_voltage
        if SweepKind.THRESHOLD in rec.pre_sweeps:
            vth = extract_threshold_voltage(rec.pre_sweeps[SweepKind.THRESHOLD], criterion_current)
        labelled.append(rec.replace(trace=trace, status=status, threshold_voltage=vth))

    clean = [r for r in labelled if not r.status.is_outlier]
    if clean:
        grids = default_grids(clean, sweep_count, fluence_count)
    else:
        grids = PipelineGrids(
            build_benchmark_grid(GridAxis.SWEEP_VOLTAGE, 0.0, 1.0, sweep_count),
            build_benchmark_grid(GridAxis.SWEEP_VOLTAGE, 0.0, 1.0, sweep_count),
            default_fluence_grid(fluence_count),
        )
    rows = [benchmark_record(r, grids) for r in clean]
    return PreprocessResult(PipelineFile(grids.as_dict(), rows), labelled, outliers)


# ---------------------------------------------------------- design matrix


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Predictors ``X`` (one row per device) with an optional target block."""

    ids: tuple
    X: np.ndarray
    columns: tuple
    y: Optional[np.ndarray] = None
    target_columns: tuple = ()

    @property
    def n_rows(self) -> int:
        return len(self.ids)

    def column_mask(self, prefix: str) -> np.ndarray:
        return np.array([c.startswith(prefix) for c in self.columns])


def predictor_columns(manufacturers: Sequence[str], grids: dict) -> list[str]:
    cols = [f"mfr_{m}" for m in manufacturers]
    cols += ["temperature_c", "bias_voltage_v", "avg_vth_v"]
    cols += [f"vgsigs_{k}" for k in range(grids["vgsigs"].count)]
    cols += [f"vdsids_{k}" for k in range(grids["vdsids"].count)]
    return cols


def predictor_row(row: PipelineRow, manufacturers: Sequence[str]) -> np.ndarray:
    onehot = [1.0 if row.manufacturer == m else 0.0 for m in manufacturers]
    return np.concatenate(
        [onehot, [row.temperature, row.bias_voltage, row.avg_vth], row.vgsigs, row.vdsids]
    )


def assemble_design_matrix(
    rows: Sequence[PipelineRow],
    grids: dict,
    target_mode="status",
    manufacturers: Optional[Sequence[str]] = None,
) -> DesignMatrix:
    """Stack benchmarked devices into predictors and targets.

    Parameters
    ----------
    rows : sequence of PipelineRow
        Non-outlier devices.
    grids : dict
        Pipeline grids keyed by block name.
    target_mode : "status" or sequence of int
        ``"status"`` gives 1 for Fail and 0 for Pass. A sequence of fluence
        grid indices gives the resampled currents at those indices.
    manufacturers : sequence of str, optional
        Categories of the one-hot block; defaults to those present in ``rows``.
    """
    if manufacturers is None:
        manufacturers = sorted({r.manufacturer for r in rows})
    manufacturers = list(manufacturers)
    for r in rows:
        if r.status.is_outlier:
            raise ContractError(f"{r.device_id} is an outlier and cannot enter the design matrix")
        if r.manufacturer not in manufacturers:
            raise ContractError(f"{r.device_id}: manufacturer {r.manufacturer} not in {manufacturers}")

    columns = predictor_columns(manufacturers, grids)
    X = np.array([predictor_row(r, manufacturers) for r in rows], dtype=float).reshape(len(rows), len(columns))
    ids = tuple(r.device_id for r in rows)

    if isinstance(target_mode, str):
        if target_mode != "status":
            raise DomainError(f"unknown target mode {target_mode!r}")
        y = np.array([1.0 if r.status == FAIL else 0.0 for r in rows])
        target_columns = ("failed",)
    else:
        idx = np.asarray(target_mode, dtype=int)
        n_flu = grids["flu"].count
        if idx.size == 0 or np.any(idx < 0) or np.any(idx >= n_flu):
            raise DomainError(f"fluence indices must lie in [0, {n_flu})")
        y = np.array([r.flu[idx] for r in rows], dtype=float).reshape(len(rows), idx.size)
        target_columns = tuple(f"flu_{k}" for k in idx)
    return DesignMatrix(ids, X, tuple(columns), y, target_columns)
