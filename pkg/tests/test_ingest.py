import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radfit.core import FAIL, PASS, BenchmarkGrid, DataError, DeviceId, DeviceStatus, OutlierClass, SweepKind
from radfit.ingest import (
    PipelineFile,
    PipelineRow,
    RawDatasetManifest,
    ParseError,
    FormatError,
    load_dataset,
    load_pipeline_file,
    parse_manifest,
    parse_static_sweep_csv,
    parse_stress_trace_csv,
    read_manifest,
    validate_dataset,
    write_pipeline_file,
)
from radfit.synthgen import write_corpus


def test_sweep_two_points():
    s = parse_static_sweep_csv("v,i\n0,0\n1,1e-3", SweepKind.GATE_SOURCE)
    assert np.array_equal(s.voltages, [0.0, 1.0]) and np.array_equal(s.currents, [0.0, 1e-3])


def test_sweep_sorted_and_duplicates_averaged():
    s = parse_static_sweep_csv("v,i\n1,2e-3\n0,1e-3\n1,4e-3\n", SweepKind.GATE_SOURCE)
    assert np.array_equal(s.voltages, [0.0, 1.0])
    assert np.array_equal(s.currents, [1e-3, 3e-3])


def test_sweep_parse_error_names_line():
    with pytest.raises(ParseError) as info:
        parse_static_sweep_csv("v,i\n0,0\nabc,1\n", SweepKind.GATE_SOURCE)
    assert info.value.line == 3 and "line 3" in str(info.value)


def test_sweep_needs_two_distinct_voltages():
    with pytest.raises(DataError):
        parse_static_sweep_csv("v,i\n1,0\n1,1\n", SweepKind.GATE_SOURCE)


def test_trace_constant_and_sorted():
    t = parse_stress_trace_csv("f,i\n0,1.0\n6e9,1.0", 1e6)
    assert len(t) == 2 and t.flux == 1e6
    t = parse_stress_trace_csv("f,i\n6e9,2.0\n0,1.0\n3e9,1.5", 1e6)
    assert np.array_equal(t.fluences, [0.0, 3e9, 6e9]) and np.array_equal(t.currents, [1.0, 1.5, 2.0])


@pytest.mark.parametrize("text", ["f,i\n-1,1.0\n1,1.0", "f,i\n0,1.0\n"])
def test_trace_rejects(text):
    with pytest.raises(DataError):
        parse_stress_trace_csv(text, 1e6)


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=200))
def test_parsing_is_total(text):
    for parse in (lambda t: parse_static_sweep_csv(t, SweepKind.GATE_SOURCE), lambda t: parse_stress_trace_csv(t, 1.0)):
        try:
            parse(text)
        except DataError:
            pass


def test_empty_manifest_loads_empty(tmp_path):
    assert load_dataset(RawDatasetManifest(tmp_path)) == []


def _one_device(small_corpus, tmp_path):
    records, truths = small_corpus
    write_corpus(records[:1], truths[:1], tmp_path)
    return records[0]


def test_one_device_round_trip(small_corpus, tmp_path):
    rec = _one_device(small_corpus, tmp_path)
    (loaded,) = load_dataset(read_manifest(tmp_path / "manifest.json"))
    assert loaded.id == rec.id and loaded.condition == rec.condition
    assert loaded.threshold_voltage == rec.threshold_voltage
    for kind, sweep in rec.pre_sweeps.items():
        assert np.array_equal(loaded.pre_sweeps[kind].voltages, sweep.voltages)
        assert np.array_equal(loaded.pre_sweeps[kind].currents, sweep.currents)
        assert loaded.pre_sweeps[kind].fixed_voltage == sweep.fixed_voltage
    assert np.array_equal(loaded.trace.fluences, rec.trace.fluences)
    assert np.array_equal(loaded.trace.currents, rec.trace.currents)
    assert loaded.trace.flux == rec.trace.flux


def test_missing_trace_file_is_io_error(small_corpus, tmp_path):
    rec = _one_device(small_corpus, tmp_path)
    doc = json.loads((tmp_path / "manifest.json").read_text())
    (tmp_path / doc["devices"][0]["files"]["trace"]).unlink()
    with pytest.raises(FileNotFoundError, match="trace"):
        load_dataset(read_manifest(tmp_path / "manifest.json"))


def test_duplicate_ids_rejected(small_corpus, tmp_path):
    _one_device(small_corpus, tmp_path)
    doc = json.loads((tmp_path / "manifest.json").read_text())
    doc["devices"] *= 2
    with pytest.raises(DataError, match="duplicate"):
        load_dataset(parse_manifest(doc, tmp_path))


def test_load_order_is_by_device_id(small_corpus, tmp_path):
    records, truths = small_corpus
    write_corpus(records, truths, tmp_path)
    doc = json.loads((tmp_path / "manifest.json").read_text())
    doc["devices"].reverse()
    loaded = load_dataset(parse_manifest(doc, tmp_path))
    assert [r.id for r in loaded] == sorted(r.id for r in records)


def test_validation(small_corpus):
    records = small_corpus[0]
    assert validate_dataset(records).ok
    bad = records[0].replace(pre_sweeps={k: v for k, v in records[0].pre_sweeps.items() if k != SweepKind.DRAIN_SOURCE})
    rep = validate_dataset([bad, *records[1:]])
    assert len(rep.violations) == 1 and rep.violations[0].device_id == bad.id
    zero_flux = records[1].replace(trace=records[1].trace.__class__(records[1].trace.fluences, records[1].trace.currents, 0.0))
    assert [v.message for v in validate_dataset([zero_flux]).violations] == ["non-positive flux"]


def _grids(n_sweep=3, n_flu=4):
    return {
        "vgsigs": BenchmarkGrid("sweep_voltage", np.linspace(-1, 1, n_sweep)),
        "vdsids": BenchmarkGrid("sweep_voltage", np.linspace(0, 2, n_sweep)),
        "flu": BenchmarkGrid("fluence", np.linspace(0, 6e9, n_flu)),
    }


def test_pipeline_empty_round_trip(tmp_path):
    write_pipeline_file([], _grids(), tmp_path / "p.csv")
    assert len((tmp_path / "p.csv").read_text().splitlines()) == 2
    assert load_pipeline_file(tmp_path / "p.csv") == PipelineFile(_grids(), ())


def test_pipeline_truncated_row(tmp_path):
    row = PipelineRow(DeviceId("A", 1), 25.0, 685.0, 3.0, [1, 2, 3], [1, 2, 3], [1, 1, 1, 1], PASS)
    write_pipeline_file([row], _grids(), tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    lines[2] = ",".join(lines[2].split(",")[:-2] + ["Pass"])
    (tmp_path / "p.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError) as info:
        load_pipeline_file(tmp_path / "p.csv")
    assert info.value.row == 0


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
statuses = st.sampled_from([PASS, FAIL, *(DeviceStatus.outlier(k) for k in OutlierClass)])


@st.composite
def pipeline_rows(draw):
    did = DeviceId(draw(st.sampled_from("ABCDEFGHIJK")), draw(st.integers(1, 24)))
    return PipelineRow(
        did,
        draw(finite),
        draw(finite),
        draw(finite),
        draw(st.lists(finite, min_size=3, max_size=3)),
        draw(st.lists(finite, min_size=3, max_size=3)),
        draw(st.lists(finite, min_size=4, max_size=4)),
        draw(statuses),
    )


@settings(max_examples=100, deadline=None)
@given(st.lists(pipeline_rows(), max_size=5))
def test_pipeline_round_trip_bitwise(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("pf") / "p.csv"
    write_pipeline_file(rows, _grids(), path)
    assert load_pipeline_file(path) == PipelineFile(_grids(), tuple(rows))


def test_pipeline_round_trip_default_corpus(default_preprocessed, tmp_path):
    pf = default_preprocessed.pipeline
    assert len(pf.rows) == 224
    write_pipeline_file(pf.rows, pf.grids, tmp_path / "p.csv")
    assert load_pipeline_file(tmp_path / "p.csv") == pf
