"""Raw experiment files, dataset validation and the pipeline file.

File formats
------------
Static sweep CSV
    Header ``voltage_v,current_a`` then one numeric row per sample.
Stress trace CSV
    Header ``fluence_ncm2,current_a`` then one numeric row per sample.
Manifest
    One JSON document::

        {"root": ".", "devices": [{"device_id": "A_1", "manufacturer": "A",
          "temperature_c": 25, "bias_voltage_v": 685, "flux_ncm2s": 1e6,
          "threshold_vds_v": 10.0, "threshold_voltage_v": 3.058,
          "files": {"pre": {"gate_source_at_vds0": "...", ...},
                    "post": {...}, "trace": "..."}}]}

    ``threshold_voltage_v`` and ``post`` are optional; paths are relative to
    ``root``, which is itself relative to the manifest's directory.
Pipeline CSV
    Line 1 is ``#`` followed by a JSON object describing the grids, line 2
    holds the column names, then one row per device.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from radfit.core import (
    PASS,
    BenchmarkGrid,
    DataError,
    DeviceId,
    DeviceRecord,
    DeviceStatus,
    FormatError,
    GridAxis,
    IVSweep,
    ParseError,
    StressCondition,
    StressTrace,
    SweepKind,
)

SWEEP_HEADER = ("voltage_v", "current_a")
TRACE_HEADER = ("fluence_ncm2", "current_a")

# block name -> grid axis; order fixes the pipeline column order
PIPELINE_BLOCKS = {"vgsigs": GridAxis.SWEEP_VOLTAGE, "vdsids": GridAxis.SWEEP_VOLTAGE, "flu": GridAxis.FLUENCE}
PIPELINE_META = ("device_id", "manufacturer", "temperature_c", "bias_voltage_v", "avg_vth_v")


def _read_two_columns(text: str | Iterable[str]) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(text, str):
        text = io.StringIO(text, newline="")
    xs, ys = [], []
    reader = csv.reader(text)
    lineno = 0
    while True:
        try:
            row = next(reader)
        except StopIteration:
            break
        except csv.Error as exc:
            raise ParseError(str(exc), reader.line_num) from None
        lineno += 1
        if lineno == 1 or not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, found {len(row)}", lineno)
        try:
            x, y = float(row[0]), float(row[1])
        except ValueError:
            raise ParseError(f"non-numeric cell in {row!r}", lineno) from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ParseError(f"non-finite value in {row!r}", lineno)
        xs.append(x)
        ys.append(y)
    return np.array(xs, dtype=float), np.array(ys, dtype=float)


def parse_static_sweep_csv(text, kind: SweepKind, fixed_voltage: Optional[float] = None) -> IVSweep:
    """Parse a two-column sweep; rows are sorted and repeated voltages averaged."""
    v, i = _read_two_columns(text)
    uniq, inverse = np.unique(v, return_inverse=True)
    if uniq.size < 2:
        raise DataError(f"sweep needs at least 2 distinct voltages, found {uniq.size}")
    counts = np.bincount(inverse)
    currents = np.bincount(inverse, weights=i) / counts
    return IVSweep(SweepKind(kind), uniq, currents, fixed_voltage)


def parse_stress_trace_csv(text, flux: float) -> StressTrace:
    f, i = _read_two_columns(text)
    if f.size < 2:
        raise DataError(f"trace needs at least 2 points, found {f.size}")
    if np.any(f < 0):
        raise DataError("negative fluence in stress trace")
    order = np.argsort(f, kind="stable")
    trace = StressTrace(f[order], i[order], flux)
    return trace


def format_two_columns(header: Sequence[str], xs, ys) -> str:
    lines = [",".join(header)]
    lines += [f"{float(x)!r},{float(y)!r}" for x, y in zip(xs, ys)]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- manifest


@dataclass(frozen=True)
class ManifestEntry:
    device_id: DeviceId
    temperature_c: float
    bias_voltage_v: float
    flux_ncm2s: float
    pre_files: dict
    trace_file: str
    threshold_vds_v: float = 10.0
    post_files: Optional[dict] = None
    threshold_voltage_v: Optional[float] = None

    def to_json(self) -> dict:
        files = {"pre": {k.value: v for k, v in self.pre_files.items()}, "trace": self.trace_file}
        if self.post_files is not None:
            files["post"] = {k.value: v for k, v in self.post_files.items()}
        out = {
            "device_id": str(self.device_id),
            "manufacturer": self.device_id.manufacturer,
            "temperature_c": self.temperature_c,
            "bias_voltage_v": self.bias_voltage_v,
            "flux_ncm2s": self.flux_ncm2s,
            "threshold_vds_v": self.threshold_vds_v,
            "files": files,
        }
        if self.threshold_voltage_v is not None:
            out["threshold_voltage_v"] = self.threshold_voltage_v
        return out


@dataclass(frozen=True)
class RawDatasetManifest:
    root: Path
    entries: tuple = field(default_factory=tuple)

    def to_json(self) -> dict:
        return {"root": ".", "devices": [e.to_json() for e in self.entries]}


def _sweep_files(raw: dict, where: str) -> dict:
    try:
        return {SweepKind(k): str(v) for k, v in raw.items()}
    except ValueError as exc:
        raise DataError(f"{where}: {exc}") from None


def parse_manifest(doc: dict, root: Path) -> RawDatasetManifest:
    entries = []
    for n, dev in enumerate(doc.get("devices", [])):
        where = f"manifest device #{n}"
        try:
            did = DeviceId.parse(dev["device_id"])
            if dev.get("manufacturer", did.manufacturer) != did.manufacturer:
                raise DataError(f"{where}: manufacturer disagrees with device id {did}")
            files = dev["files"]
            entries.append(
                ManifestEntry(
                    device_id=did,
                    temperature_c=dev["temperature_c"],
                    bias_voltage_v=dev["bias_voltage_v"],
                    flux_ncm2s=dev["flux_ncm2s"],
                    pre_files=_sweep_files(files["pre"], where),
                    trace_file=str(files["trace"]),
                    threshold_vds_v=dev.get("threshold_vds_v", 10.0),
                    post_files=_sweep_files(files["post"], where) if "post" in files else None,
                    threshold_voltage_v=dev.get("threshold_voltage_v"),
                )
            )
        except KeyError as exc:
            raise DataError(f"{where}: missing field {exc}") from None
    return RawDatasetManifest(Path(root) / doc.get("root", "."), tuple(entries))


def read_manifest(path) -> RawDatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from None
    return parse_manifest(doc, path.parent)


def _read(root: Path, rel: str) -> str:
    path = root / rel
    try:
        return path.read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"missing data file: {path}") from None


def _load_sweeps(root: Path, files: dict, threshold_vds: float) -> dict:
    return {
        kind: parse_static_sweep_csv(
            _read(root, rel), kind, threshold_vds if kind is SweepKind.THRESHOLD else None
        )
        for kind, rel in files.items()
    }


def load_dataset(manifest: RawDatasetManifest) -> list[DeviceRecord]:
    """Load every manifest entry; records come back sorted by device id.

    Statuses are a ``Pass`` placeholder until preprocessing assigns them.
    When the manifest omits ``threshold_voltage_v`` it is extracted from
    the pre-stress threshold sweep.
    """
    seen = set()
    for e in manifest.entries:
        if e.device_id in seen:
            raise DataError(f"duplicate device id {e.device_id}")
        seen.add(e.device_id)

    records = []
    for e in sorted(manifest.entries, key=lambda e: e.device_id):
        where = str(e.device_id)
        try:
            pre = _load_sweeps(manifest.root, e.pre_files, e.threshold_vds_v)
            post = _load_sweeps(manifest.root, e.post_files, e.threshold_vds_v) if e.post_files else None
            trace = parse_stress_trace_csv(_read(manifest.root, e.trace_file), e.flux_ncm2s)
        except DataError as exc:
            raise type(exc)(f"{where}: {exc}") from None
        vth = e.threshold_voltage_v
        if vth is None:
            from radfit.preprocess import extract_threshold_voltage

            if SweepKind.THRESHOLD not in pre:
                raise DataError(f"{where}: no threshold voltage and no threshold sweep")
            vth = extract_threshold_voltage(pre[SweepKind.THRESHOLD])
        records.append(
            DeviceRecord(
                id=e.device_id,
                condition=StressCondition(e.temperature_c, e.bias_voltage_v),
                pre_sweeps=pre,
                threshold_voltage=float(vth),
                trace=trace,
                status=PASS,
                post_sweeps=post,
            )
        )
    return records


@dataclass
class Violation:
    device_id: DeviceId
    message: str

    def __str__(self) -> str:
        return f"{self.device_id}: {self.message}"


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def for_device(self, device_id: DeviceId) -> list:
        return [v for v in self.violations if v.device_id == device_id]


def validate_dataset(records: Iterable[DeviceRecord]) -> ValidationReport:
    report = ValidationReport()
    seen = set()
    for rec in records:
        if rec.id in seen:
            report.violations.append(Violation(rec.id, "duplicate device id"))
        seen.add(rec.id)
        report.violations.extend(Violation(rec.id, msg) for msg in rec.problems())
    return report


# ----------------------------------------------------------- pipeline file


@dataclass(frozen=True, eq=False)
class PipelineRow:
    """One benchmarked device: metadata, resampled sweeps and trace, status."""

    device_id: DeviceId
    temperature: float
    bias_voltage: float
    avg_vth: float
    vgsigs: np.ndarray
    vdsids: np.ndarray
    flu: np.ndarray
    status: DeviceStatus

    def __post_init__(self):
        for name in PIPELINE_BLOCKS:
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def manufacturer(self) -> str:
        return self.device_id.manufacturer

    def block(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def __eq__(self, other):
        if not isinstance(other, PipelineRow):
            return NotImplemented
        return (
            self.device_id == other.device_id
            and self.status == other.status
            and _same_float(self.temperature, other.temperature)
            and _same_float(self.bias_voltage, other.bias_voltage)
            and _same_float(self.avg_vth, other.avg_vth)
            and all(np.array_equal(self.block(b), other.block(b)) for b in PIPELINE_BLOCKS)
        )

    __hash__ = None


def _same_float(a: float, b: float) -> bool:
    return np.float64(a).tobytes() == np.float64(b).tobytes()


@dataclass(frozen=True, eq=False)
class PipelineFile:
    grids: dict
    rows: tuple = ()

    def __post_init__(self):
        if list(self.grids) != list(PIPELINE_BLOCKS):
            raise FormatError(f"pipeline grids must be {list(PIPELINE_BLOCKS)}, got {list(self.grids)}")
        object.__setattr__(self, "rows", tuple(self.rows))
        for n, row in enumerate(self.rows):
            for name, grid in self.grids.items():
                if row.block(name).size != grid.count:
                    raise FormatError(
                        f"{row.device_id}: {name} block has {row.block(name).size} values, grid has {grid.count}",
                        n,
                    )

    def columns(self) -> list[str]:
        cols = list(PIPELINE_META)
        for name, grid in self.grids.items():
            cols += [f"{name}_{k}" for k in range(grid.count)]
        return cols + ["status"]

    def __eq__(self, other):
        if not isinstance(other, PipelineFile):
            return NotImplemented
        return self.grids == other.grids and self.rows == other.rows

    __hash__ = None


def _num(x: float) -> str:
    return repr(float(x))


def write_pipeline_file(rows: Sequence[PipelineRow], grids: dict, path) -> None:
    """Write rows as CSV; floats use the shortest repr that round-trips."""
    pf = PipelineFile(dict(grids), tuple(rows))
    header = {
        "grids": {
            name: {"axis": g.axis.value, "count": g.count, "positions": [float(p) for p in g.positions]}
            for name, g in pf.grids.items()
        }
    }
    out = io.StringIO()
    out.write("#" + json.dumps(header, separators=(",", ":")) + "\n")
    out.write(",".join(pf.columns()) + "\n")
    for row in pf.rows:
        cells = [str(row.device_id), row.manufacturer, _num(row.temperature), _num(row.bias_voltage), _num(row.avg_vth)]
        for name in PIPELINE_BLOCKS:
            cells += [_num(v) for v in row.block(name)]
        cells.append(str(row.status))
        out.write(",".join(cells) + "\n")
    Path(path).write_text(out.getvalue())


def load_pipeline_file(path) -> PipelineFile:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2 or not lines[0].startswith("#"):
        raise FormatError("pipeline file needs a '#'-prefixed grid header and a column header")
    try:
        header = json.loads(lines[0][1:])
        grids = {
            name: BenchmarkGrid(spec["axis"], spec["positions"]) for name, spec in header["grids"].items()
        }
        for name, spec in header["grids"].items():
            if spec["count"] != grids[name].count:
                raise FormatError(f"grid {name}: count {spec['count']} disagrees with positions")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"bad grid header: {exc}") from None
    if list(grids) != list(PIPELINE_BLOCKS):
        raise FormatError(f"pipeline grids must be {list(PIPELINE_BLOCKS)}, got {list(grids)}")
    if grids["flu"].end != 6.0e9:
        raise FormatError(f"fluence grid must end at 6.0e9, ends at {grids['flu'].end!r}")

    expected = PipelineFile(grids).columns()
    if lines[1].split(",") != expected:
        raise FormatError("column header does not match the grid header")
    rows = []
    for n, line in enumerate(lines[2:]):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(expected):
            raise FormatError(f"expected {len(expected)} columns, found {len(cells)}", n)
        try:
            did = DeviceId.parse(cells[0])
            if cells[1] != did.manufacturer:
                raise FormatError(f"manufacturer {cells[1]!r} disagrees with {did}", n)
            nums = [float(c) for c in cells[2:-1]]
            status = DeviceStatus.parse(cells[-1])
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(str(exc), n) from None
        blocks = {}
        pos = 3
        for name, grid in grids.items():
            blocks[name] = nums[pos : pos + grid.count]
            pos += grid.count
        rows.append(PipelineRow(did, nums[0], nums[1], nums[2], status=status, **blocks))
    return PipelineFile(grids, tuple(rows))
