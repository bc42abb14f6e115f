"""Deterministic synthetic beam experiments with known ground truth.

Each manufacturer has a parametric I-V template, so static data cluster by
manufacturer. A device's failure probability is a logistic function of its
threshold-voltage deviation, temperature, bias and a manufacturer offset,
scaled by ``signal_strength``; failing devices get a sigmoidal current drop
whose location depends on the stress condition. Outlier classes can be
injected on top, and the injection labels serve as the detector oracle.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit

from radfit.core import (
    FAIL,
    PASS,
    STANDARD_FLUENCE,
    DataError,
    DeviceId,
    DeviceRecord,
    DeviceStatus,
    DomainError,
    IVSweep,
    OutlierClass,
    StressCondition,
    StressTrace,
    SweepKind,
)
from radfit.ingest import (
    SWEEP_HEADER,
    TRACE_HEADER,
    ManifestEntry,
    RawDatasetManifest,
    format_two_columns,
)
from radfit.preprocess import extract_threshold_voltage

CRITERION_CURRENT = 1e-6
THRESHOLD_VDS = 10.0
GATE_SWEEP = np.linspace(-20.0, 20.0, 161)
DRAIN_SWEEP = np.linspace(0.0, 100.0, 201)
THRESHOLD_SWEEP = np.linspace(0.0, 10.0, 201)
SUBTHRESHOLD_SLOPE = 0.12  # V per e-fold
# Failure propensity grows with the threshold voltage's deviation from a
# common reference, so manufacturers with high nominal thresholds fail more.
VTH_REFERENCE = 3.2
VTH_SCALE = 1.2


@dataclass(frozen=True)
class ManufacturerTemplate:
    code: str
    vth_nominal: float  # V
    gate_leakage: float  # A/V
    drain_leakage: float  # A at the top of the drain sweep
    base_current: float  # A, stress-trace starting current
    failure_offset: float


# Leakage amplitudes sit on a 5 x 2 lattice so the templates separate in two
# principal components; nominal thresholds A-E are the device values listed
# in the design-matrix example of the source study.
TEMPLATES = (
    ManufacturerTemplate("A", 3.058, 1e-9, 1e-8, 1.00, 0.6),
    ManufacturerTemplate("B", 2.069, 2e-9, 1e-8, 0.80, -0.4),
    ManufacturerTemplate("C", 1.354, 3e-9, 1e-8, 1.20, 0.2),
    ManufacturerTemplate("D", 5.432, 4e-9, 1e-8, 0.90, -0.8),
    ManufacturerTemplate("E", 3.251, 5e-9, 1e-8, 1.10, 1.0),
    ManufacturerTemplate("F", 2.600, 1e-9, 3e-8, 0.70, -0.2),
    ManufacturerTemplate("G", 4.100, 2e-9, 3e-8, 1.30, 0.4),
    ManufacturerTemplate("H", 1.900, 3e-9, 3e-8, 0.95, -0.6),
    ManufacturerTemplate("I", 3.700, 4e-9, 3e-8, 1.05, 0.8),
    ManufacturerTemplate("J", 4.600, 5e-9, 3e-8, 0.85, -1.0),
    ManufacturerTemplate("K", 3.400, 6e-9, 2e-8, 1.15, 0.0),
)
TEMPLATE_BY_CODE = {t.code: t for t in TEMPLATES}

_DEFAULT_OUTLIER_COUNTS = {
    OutlierClass.LITTLE_DATA_AT_DECLINE: 3,
    OutlierClass.CURRENT_JUMP: 3,
    OutlierClass.INSTANT_CURRENT_DECLINE: 3,
    OutlierClass.CLOUD: 3,
    OutlierClass.ODD_CURVE: 2,
    OutlierClass.ODD_BEGINNING_CURRENT: 2,
}


def _default_outlier_rates() -> dict:
    return {k.value: n / 240 for k, n in _DEFAULT_OUTLIER_COUNTS.items()}


@dataclass(frozen=True)
class SynthManifest:
    n_manufacturers: int = 10
    devices_per_manufacturer: int = 24
    bias_levels: tuple = (685.0, 1027.0, 1369.0)
    failure_fraction: float = 0.7
    noise_sigma: float = 0.01
    signal_strength: float = 12.0
    device_spread: float = 0.01
    vth_spread: float = 0.15
    spike_rate: float = 0.005
    trace_points: int = 600
    flux: float = 1e6
    outlier_rates: dict = field(default_factory=_default_outlier_rates)
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "bias_levels", tuple(float(b) for b in self.bias_levels))
        rates = {OutlierClass(k).value: float(v) for k, v in self.outlier_rates.items()}
        object.__setattr__(self, "outlier_rates", rates)
        if not 1 <= self.n_manufacturers <= len(TEMPLATES):
            raise DomainError(f"n_manufacturers must lie in [1, {len(TEMPLATES)}]")
        if self.devices_per_manufacturer < 1 or self.trace_points < 20:
            raise DomainError("need at least one device per manufacturer and 20 trace points")
        unit = [self.failure_fraction, self.spike_rate, *rates.values()]
        if any(not 0 <= r <= 1 for r in unit):
            raise DomainError("rates and the failure fraction must lie in [0, 1]")
        if self.noise_sigma < 0 or self.signal_strength < 0 or self.device_spread < 0 or self.vth_spread <= 0:
            raise DomainError("noise, signal strength and spreads must be non-negative")
        if len(self.bias_levels) != 3 or not self.flux > 0:
            raise DomainError("need three bias levels and a positive flux")

    @property
    def manufacturers(self) -> tuple:
        return tuple(t.code for t in TEMPLATES[: self.n_manufacturers])

    @property
    def n_devices(self) -> int:
        return self.n_manufacturers * self.devices_per_manufacturer

    def outlier_counts(self) -> dict:
        return {OutlierClass(k): int(round(r * self.n_devices)) for k, r in self.outlier_rates.items()}

    def to_json(self) -> dict:
        d = asdict(self)
        d["bias_levels"] = list(self.bias_levels)
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "SynthManifest":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise DataError(f"unknown synth manifest keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class TraceShape:
    """Noise-free stress-response shape of one device."""

    baseline: float
    end_fluence: float
    drift: float = 0.0
    drop_fluence: Optional[float] = None
    drop_width: float = 1e8
    drop_depth: float = 0.5  # remaining fraction after the drop

    def current(self, f: np.ndarray) -> np.ndarray:
        out = self.baseline * (1.0 - self.drift * f / STANDARD_FLUENCE)
        if self.drop_fluence is not None:
            out = out * (1.0 - (1.0 - self.drop_depth) * expit((f - self.drop_fluence) / self.drop_width))
        return out


@dataclass
class GroundTruth:
    device_id: DeviceId
    status: DeviceStatus
    vth: float
    shape: TraceShape
    noise_sigma: float
    drop_fluence: Optional[float] = None
    outlier_class: Optional[OutlierClass] = None
    point_outlier_indices: tuple = ()
    cloud_indices: tuple = ()


def condition_for(manifest: SynthManifest, manufacturer_pos: int, index: int) -> StressCondition:
    """Odd device numbers at 25 C, even at 150 C; bias cycles through the levels."""
    temperature = 25 if index % 2 == 1 else 150
    bias = manifest.bias_levels[(2 * manufacturer_pos + index - 1) % 3]
    return StressCondition(temperature, bias)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def _temp_term(condition: StressCondition) -> float:
    return -1.0 if condition.temperature == 25 else 1.0


def _bias_term(condition: StressCondition, levels: Sequence[float]) -> float:
    return float(np.argmin([abs(condition.bias_voltage - b) for b in levels]) - 1)


def _propensity(vth: float, temp_term: float, bias_term: float, offset: float) -> float:
    return 0.7 * (vth - VTH_REFERENCE) / VTH_SCALE + 0.5 * temp_term + 0.4 * bias_term + 0.3 * offset


def failure_intercept(manifest: SynthManifest) -> float:
    """Logit intercept making the expected failure fraction equal the target.

    The expectation runs over the corpus design (temperature, bias and
    manufacturer mix) and the normal spread of threshold voltages around
    each nominal, by Gauss-Hermite quadrature.
    """
    f = manifest.failure_fraction
    s = manifest.signal_strength
    if s == 0 or f in (0.0, 1.0):
        return float(logit(f)) if 0 < f < 1 else math.copysign(math.inf, f - 0.5)
    nodes, weights = np.polynomial.hermite_e.hermegauss(64)
    weights = weights / weights.sum()
    ks = []
    for pos, code in enumerate(manifest.manufacturers):
        for index in range(1, manifest.devices_per_manufacturer + 1):
            cond = condition_for(manifest, pos, index)
            tpl = TEMPLATE_BY_CODE[code]
            ks.append(_propensity(tpl.vth_nominal, _temp_term(cond), _bias_term(cond, manifest.bias_levels), tpl.failure_offset))
    z = np.asarray(ks)[:, None] + 0.7 * manifest.vth_spread / VTH_SCALE * nodes[None, :]

    def excess(c):
        return float(np.mean(expit(c + s * z) @ weights)) - f

    return brentq(excess, -100.0, 100.0, xtol=1e-12)


# ----------------------------------------------------------------- sweeps


def _threshold_current(v: np.ndarray, vth: float) -> np.ndarray:
    x = (v - vth) / SUBTHRESHOLD_SLOPE
    below = CRITERION_CURRENT * np.exp(np.minimum(x, 0.0))
    above = CRITERION_CURRENT * (1.0 + x + 0.5 * x * x)
    return np.where(x <= 0, below, above)


def _noisy(values: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma == 0:
        return values
    return values * (1.0 + sigma * rng.standard_normal(values.shape))


def _static_sweeps(tpl, vth, gate_gain, drain_gain, rating_level, sigma, rng) -> dict:
    v = np.union1d(THRESHOLD_SWEEP, [vth])
    vth_sweep = IVSweep(SweepKind.THRESHOLD, v, _noisy(_threshold_current(v, vth), sigma, rng), THRESHOLD_VDS)
    g = GATE_SWEEP
    igs = tpl.gate_leakage * gate_gain * g * (1.0 + 0.3 * (g / 20.0) ** 2)
    d = DRAIN_SWEEP / DRAIN_SWEEP[-1]
    ids = tpl.drain_leakage * drain_gain * (d + 0.5 * d**3 + 0.25 * rating_level * np.exp((d - 1.0) / 0.04))
    return {
        SweepKind.GATE_SOURCE: IVSweep(SweepKind.GATE_SOURCE, g, _noisy(igs, sigma, rng)),
        SweepKind.DRAIN_SOURCE: IVSweep(SweepKind.DRAIN_SOURCE, DRAIN_SWEEP, _noisy(ids, sigma, rng)),
        SweepKind.THRESHOLD: vth_sweep,
    }


# ----------------------------------------------------------------- traces


def _trace_fluences(shape: TraceShape, n_per_standard: int, rng) -> np.ndarray:
    step = STANDARD_FLUENCE / n_per_standard
    n = int(shape.end_fluence / step) + 1
    f = np.arange(n) * step
    f[1:-1] += rng.uniform(-0.3, 0.3, n - 2) * step
    f[-1] = shape.end_fluence
    return np.sort(f)


def _add_spikes(currents: np.ndarray, rate: float, rng) -> tuple[np.ndarray, tuple]:
    n = currents.size
    n_spikes = rng.binomial(n - 2, rate) if rate > 0 else 0
    chosen: list[int] = []
    for k in rng.permutation(np.arange(2, n - 2)):
        if len(chosen) == n_spikes:
            break
        if all(abs(k - c) > 2 for c in chosen):
            chosen.append(int(k))
    chosen.sort()
    out = currents.copy()
    for k in chosen:
        sign = 1.0 if rng.random() < 0.5 else -1.0
        out[k] *= 1.0 + sign * rng.uniform(0.3, 0.8)
    return out, tuple(chosen)


def _render(shape: TraceShape, manifest_points: int, sigma: float, spike_rate: float, flux: float, rng):
    f = _trace_fluences(shape, manifest_points, rng)
    i = _noisy(shape.current(f), sigma, rng)
    i, spikes = _add_spikes(i, spike_rate, rng)
    return StressTrace(f, i, flux), spikes


def generate_device(
    manufacturer: str,
    index: int,
    condition: StressCondition,
    params: SynthManifest = SynthManifest(),
    seed: Optional[int] = None,
    vth: Optional[float] = None,
) -> tuple[DeviceRecord, GroundTruth]:
    """One synthetic device; fully determined by its arguments.

    ``vth`` pins the planted threshold voltage instead of drawing it.
    """
    tpl = TEMPLATE_BY_CODE[manufacturer]
    pos = TEMPLATES.index(tpl)
    seed = params.seed if seed is None else seed
    rng = _rng(seed, pos, index)
    did = DeviceId(manufacturer, index)

    u_vth = rng.standard_normal()
    planted_vth = tpl.vth_nominal + params.vth_spread * u_vth if vth is None else float(vth)
    gate_gain, drain_gain, base_gain = 1.0 + params.device_spread * rng.standard_normal(3)
    t_term = _temp_term(condition)
    b_term = _bias_term(condition, params.bias_levels)
    rating_level = b_term + 1.0

    sweeps = _static_sweeps(tpl, planted_vth, gate_gain, drain_gain, rating_level, params.noise_sigma, rng)

    intercept = failure_intercept(params)
    z = _propensity(planted_vth, t_term, b_term, tpl.failure_offset)
    p_fail = expit(intercept + params.signal_strength * z) if math.isfinite(intercept) else float(intercept > 0)
    failed = rng.random() < p_fail

    drop_frac = float(np.clip(0.55 - 0.15 * b_term - 0.1 * t_term + 0.03 * rng.standard_normal(), 0.2, 0.9))
    drop_width = rng.uniform(0.01, 0.025) * STANDARD_FLUENCE
    drop_depth = float(np.clip(0.5 - 0.1 * t_term + 0.05 * rng.standard_normal(), 0.3, 0.7))
    end = rng.uniform(0.8, 1.2) * STANDARD_FLUENCE
    drift = rng.uniform(0.0, 0.03)
    drop_fluence = drop_frac * STANDARD_FLUENCE if failed else None
    if failed:
        end = max(end, drop_fluence + 6 * drop_width)
    shape = TraceShape(
        baseline=tpl.base_current * base_gain,
        end_fluence=end,
        drift=drift,
        drop_fluence=drop_fluence,
        drop_width=drop_width,
        drop_depth=drop_depth,
    )
    trace, spikes = _render(shape, params.trace_points, params.noise_sigma, params.spike_rate, params.flux, rng)

    post_shift = rng.uniform(0.0, 0.1) + (0.2 if failed else 0.0)
    post = _static_sweeps(tpl, planted_vth - post_shift, gate_gain * 1.05, drain_gain * (1.3 if failed else 1.05),
                          rating_level, params.noise_sigma, rng)

    status = FAIL if failed else PASS
    record = DeviceRecord(
        id=did,
        condition=condition,
        pre_sweeps=sweeps,
        threshold_voltage=extract_threshold_voltage(sweeps[SweepKind.THRESHOLD], CRITERION_CURRENT),
        trace=trace,
        status=status,
        post_sweeps=post,
    )
    truth = GroundTruth(
        device_id=did,
        status=status,
        vth=planted_vth,
        shape=shape,
        noise_sigma=params.noise_sigma,
        drop_fluence=drop_fluence,
        point_outlier_indices=spikes,
    )
    return record, truth


# -------------------------------------------------------------- outliers


def inject_outlier(
    record: DeviceRecord,
    truth: GroundTruth,
    kind: OutlierClass,
    seed: int = 0,
) -> tuple[DeviceRecord, GroundTruth]:
    """Reshape a device's trace so it shows the geometry of ``kind``."""
    kind = OutlierClass(kind)
    rng = _rng(seed, 7919, TEMPLATES.index(TEMPLATE_BY_CODE[record.id.manufacturer]), record.id.index)
    shape = truth.shape
    trace = record.trace
    n_std = max(int(round(STANDARD_FLUENCE / np.median(np.diff(trace.fluences)))), 20)
    sigma = truth.noise_sigma
    cloud: tuple = ()
    spikes = truth.point_outlier_indices

    def rerender(new_shape):
        return _render(new_shape, n_std, sigma, 0.0, trace.flux, rng)[0]

    if kind is OutlierClass.CLOUD:
        # At most one scatter point per sampling gap, kept at least 20% of the
        # baseline away from the curve; closer points would be
        # indistinguishable from measurement noise.
        n_extra = int(math.ceil(rng.uniform(0.25, 0.35) * len(trace)))
        gaps = np.sort(rng.choice(np.arange(1, len(trace) - 1), n_extra, replace=False))
        extra_f = trace.fluences[gaps] + rng.uniform(0.2, 0.8, n_extra) * (trace.fluences[gaps + 1] - trace.fluences[gaps])
        ratio = rng.uniform(0.1, 2.1, n_extra)
        level = shape.current(extra_f) / shape.baseline
        ratio = np.where(ratio > level - 0.2, ratio + 0.4, ratio)
        extra_i = ratio * shape.baseline
        f = np.concatenate([trace.fluences, extra_f])
        i = np.concatenate([trace.currents, extra_i])
        tag = np.concatenate([np.zeros(len(trace), bool), np.ones(n_extra, bool)])
        order = np.argsort(f, kind="stable")
        trace = trace.with_points(f[order], i[order])
        cloud = tuple(int(k) for k in np.flatnonzero(tag[order]))
        spikes = ()
    elif kind is OutlierClass.CURRENT_JUMP:
        fj = rng.uniform(0.3, 0.6) * shape.end_fluence
        factor = rng.uniform(4.0, 6.0)
        i = np.where(trace.fluences >= fj, trace.currents * factor, trace.currents)
        trace = trace.with_points(trace.fluences, i)
    elif kind is OutlierClass.INSTANT_CURRENT_DECLINE:
        shape = replace(
            shape,
            drop_fluence=rng.uniform(0.02, 0.035) * STANDARD_FLUENCE,
            drop_width=rng.uniform(0.001, 0.002) * STANDARD_FLUENCE,
            drop_depth=rng.uniform(0.1, 0.4),
        )
        trace = rerender(shape)
        spikes = ()
    elif kind is OutlierClass.LITTLE_DATA_AT_DECLINE:
        gap = 0.05 * STANDARD_FLUENCE
        drop = shape.drop_fluence if shape.drop_fluence is not None else rng.uniform(0.3, 0.7) * STANDARD_FLUENCE
        drop = min(drop, shape.end_fluence - 2 * gap)
        shape = replace(shape, drop_fluence=drop, drop_width=0.002 * STANDARD_FLUENCE, drop_depth=rng.uniform(0.3, 0.6))
        full = rerender(shape)
        keep = (full.fluences <= drop - gap) | (full.fluences >= drop + gap)
        mid = int(np.argmin(np.abs(full.fluences - drop)))
        keep[mid] = rng.random() < 0.5
        trace = full.with_points(full.fluences[keep], full.currents[keep])
        spikes = ()
    elif kind is OutlierClass.ODD_CURVE:
        f1 = rng.uniform(0.15, 0.3) * STANDARD_FLUENCE
        f2 = f1 + rng.uniform(0.2, 0.3) * STANDARD_FLUENCE
        rise = rng.uniform(2.0, 2.5)
        f = _trace_fluences(shape, n_std, rng)
        s1 = expit((f - f1) / (0.03 * STANDARD_FLUENCE))
        s2 = expit((f - f2) / (0.05 * STANDARD_FLUENCE))
        i = _noisy(shape.baseline * (1.0 - 0.4 * s1 + (rise - 0.6) * s2), sigma, rng)
        trace = trace.with_points(f, i)
        shape = replace(shape, drop_fluence=None)
        spikes = ()
    elif kind is OutlierClass.ODD_BEGINNING_CURRENT:
        factor = 20.0 if rng.random() < 0.5 else 0.05
        trace = trace.with_points(trace.fluences, trace.currents * factor)
        shape = replace(shape, baseline=shape.baseline * factor)

    new_truth = replace(truth, shape=shape, outlier_class=kind, cloud_indices=cloud, point_outlier_indices=spikes)
    return record.replace(trace=trace, status=DeviceStatus.outlier(kind)), new_truth


# ---------------------------------------------------------------- corpus


def generate_corpus(manifest: SynthManifest = SynthManifest(), out_dir=None) -> tuple[list, list]:
    """Every device of the manifest, with outliers injected at random devices.

    Returns records and ground truths sorted by device id. When ``out_dir``
    is given the raw files, a dataset manifest and a ground-truth CSV are
    written there as well.
    """
    records, truths = [], []
    for pos, code in enumerate(manifest.manufacturers):
        for index in range(1, manifest.devices_per_manufacturer + 1):
            rec, tr = generate_device(code, index, condition_for(manifest, pos, index), manifest)
            records.append(rec)
            truths.append(tr)

    counts = manifest.outlier_counts()
    total = sum(counts.values())
    if total > len(records):
        raise DomainError(f"{total} outliers requested for {len(records)} devices")
    chosen = _rng(manifest.seed, 104729).permutation(len(records))[:total]
    kinds = [k for k in OutlierClass for _ in range(counts.get(k, 0))]
    for slot, kind in zip(sorted(chosen), kinds):
        records[slot], truths[slot] = inject_outlier(records[slot], truths[slot], kind, manifest.seed)

    if out_dir is not None:
        write_corpus(records, truths, out_dir)
    return records, truths


def write_corpus(records: Sequence[DeviceRecord], truths: Sequence[GroundTruth], out_dir) -> RawDatasetManifest:
    out = Path(out_dir)
    (out / "static").mkdir(parents=True, exist_ok=True)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in records:
        name = str(rec.id)
        pre, post = {}, {}
        for stage, sweeps, files in (("pre", rec.pre_sweeps, pre), ("post", rec.post_sweeps or {}, post)):
            for kind, sweep in sweeps.items():
                rel = f"static/{name}_{stage}_{kind.value}.csv"
                (out / rel).write_text(format_two_columns(SWEEP_HEADER, sweep.voltages, sweep.currents))
                files[kind] = rel
        rel_trace = f"traces/{name}.csv"
        (out / rel_trace).write_text(format_two_columns(TRACE_HEADER, rec.trace.fluences, rec.trace.currents))
        entries.append(
            ManifestEntry(
                device_id=rec.id,
                temperature_c=rec.condition.temperature,
                bias_voltage_v=rec.condition.bias_voltage,
                flux_ncm2s=rec.trace.flux,
                pre_files=pre,
                trace_file=rel_trace,
                threshold_vds_v=THRESHOLD_VDS,
                post_files=post or None,
                threshold_voltage_v=rec.threshold_voltage,
            )
        )
    manifest = RawDatasetManifest(out, tuple(entries))
    (out / "manifest.json").write_text(json.dumps(manifest.to_json(), indent=1) + "\n")
    write_ground_truth(truths, out / "ground_truth.csv")
    return manifest


def write_ground_truth(truths: Sequence[GroundTruth], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["device_id", "true_status", "drop_fluence", "outlier_class", "planted_vth"])
        for t in truths:
            w.writerow([
                str(t.device_id),
                str(t.status if t.outlier_class is None else ("Fail" if t.drop_fluence is not None else "Pass")),
                "" if t.drop_fluence is None else repr(float(t.drop_fluence)),
                "" if t.outlier_class is None else t.outlier_class.value,
                repr(float(t.vth)),
            ])


def read_ground_truth(path) -> dict:
    """device id -> (true status, drop fluence or None, outlier class or None)."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[DeviceId.parse(row["device_id"])] = (
                DeviceStatus.parse(row["true_status"]),
                float(row["drop_fluence"]) if row["drop_fluence"] else None,
                OutlierClass(row["outlier_class"]) if row["outlier_class"] else None,
            )
    return out
