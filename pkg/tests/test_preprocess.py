import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radfit.core import (
    PASS,
    STANDARD_FLUENCE,
    BenchmarkGrid,
    ContractError,
    DataError,
    DeviceStatus,
    DomainError,
    GridAxis,
    IVSweep,
    OutlierClass,
    StressCondition,
    StressTrace,
    SweepKind,
)
from radfit.preprocess import (
    OutlierRuleConfig,
    assemble_design_matrix,
    build_benchmark_grid,
    classify_device_outlier,
    extract_threshold_voltage,
    filter_point_outliers,
    point_outlier_mask,
    predictor_row,
    resample_to_grid,
    standardize_fluence,
)
from radfit.synthgen import SynthManifest, generate_device, inject_outlier

FLU = GridAxis.FLUENCE


def test_grid_endpoints_only():
    g = build_benchmark_grid(FLU, 0.0, 6.0e9, 2)
    assert list(g.positions) == [0.0, 6.0e9]


def test_grid_steps():
    g = build_benchmark_grid(FLU, 0.0, 6.0e9, 61)
    assert np.allclose(np.diff(g.positions), 1.0e8, rtol=1e-12)
    assert g.end == 6.0e9
    g = build_benchmark_grid(GridAxis.SWEEP_VOLTAGE, -5.0, 5.0, 101)
    assert np.allclose(np.diff(g.positions), 0.1, rtol=1e-12)
    assert (g.start, g.end) == (-5.0, 5.0)


def test_log_grid_hits_endpoints():
    g = build_benchmark_grid(FLU, 1e3, 1e9, 7, "log")
    assert (g.start, g.end) == (1e3, 1e9)
    assert np.allclose(np.diff(np.log10(g.positions)), 1.0)


@pytest.mark.parametrize("args", [(1.0, 0.0, 5), (0.0, 1.0, 1), (0.0, 1.0, 5, "log")])
def test_grid_rejects(args):
    with pytest.raises(DomainError):
        build_benchmark_grid(FLU, *args)


def test_resample_constant():
    g = build_benchmark_grid(FLU, 0.0, 6e9, 61)
    assert np.array_equal(resample_to_grid([0, 6e9], [1, 1], g), np.ones(61))


def test_resample_linear():
    g = BenchmarkGrid(FLU, [0.0, 5.0, 10.0])
    assert np.array_equal(resample_to_grid([0, 10], [0, 10], g), [0.0, 5.0, 10.0])


def test_resample_pads_with_last_current():
    g = build_benchmark_grid(FLU, 0.0, 6e9, 61)
    out = resample_to_grid([0, 2e9, 4e9], [1.0, 0.9, 0.8], g)
    assert np.all(out[g.positions > 4e9] == 0.8)


def test_resample_discards_data_past_grid_end():
    g = BenchmarkGrid(FLU, [0.0, 1.0, 2.0])
    a = resample_to_grid([0, 1, 2, 3], [1.0, 2.0, 3.0, -50.0], g, "monotone_cubic")
    b = resample_to_grid([0, 1, 2], [1.0, 2.0, 3.0], g, "monotone_cubic")
    assert np.array_equal(a, b)


def test_resample_rejects_degenerate():
    g = BenchmarkGrid(FLU, [0.0, 1.0])
    for x, y in (([0.0], [1.0]), ([1.0, 1.0], [1.0, 2.0]), ([1.0, 0.0], [1.0, 2.0])):
        with pytest.raises(DataError):
            resample_to_grid(x, y, g)


@st.composite
def series(draw):
    n = draw(st.integers(2, 30))
    x = np.cumsum(draw(st.lists(st.floats(1e-3, 10.0), min_size=n, max_size=n)))
    value = st.one_of(st.just(0.0), st.floats(1e-6, 1e3), st.floats(-1e3, -1e-6))
    y = np.array(draw(st.lists(value, min_size=n, max_size=n)))
    return x - x[0], y


methods = st.sampled_from(["piecewise_linear", "monotone_cubic"])


@settings(max_examples=150, deadline=None)
@given(series(), methods, st.integers(2, 40))
def test_resample_idempotent(s, method, count):
    x, y = s
    g = build_benchmark_grid(FLU, 0.0, float(x[-1]) * 1.2, count)
    once = resample_to_grid(x, y, g, method)
    assert np.array_equal(resample_to_grid(g.positions, once, g, method), once)


@settings(max_examples=150, deadline=None)
@given(series(), methods)
def test_resample_exact_at_observed_x(s, method):
    x, y = s
    g = BenchmarkGrid(FLU, x)
    assert np.array_equal(resample_to_grid(x, y, g, method), y)


@settings(max_examples=150, deadline=None)
@given(series(), methods, st.sampled_from([0.5, 2.0, 4.0, 0.25]))
def test_resample_commutes_with_scaling(s, method, alpha):
    # powers of two keep the products exact
    x, y = s
    g = build_benchmark_grid(FLU, 0.0, float(x[-1]), 17)
    assert np.array_equal(resample_to_grid(x, alpha * y, g, method), alpha * resample_to_grid(x, y, g, method))


@settings(max_examples=150, deadline=None)
@given(series(), st.integers(2, 60))
def test_monotone_cubic_no_overshoot(s, count):
    x, y = s
    y = np.sort(y)
    g = build_benchmark_grid(FLU, 0.0, float(x[-1]), count)
    out = resample_to_grid(x, y, g, "monotone_cubic")
    assert np.all(np.diff(out) >= -1e-9 * (1 + np.abs(out[1:])))
    assert out.min() >= y.min() - 1e-9 * (1 + abs(y.min())) and out.max() <= y.max() + 1e-9 * (1 + abs(y.max()))


def _trace(currents, fluences=None):
    c = np.asarray(currents, dtype=float)
    f = np.linspace(0, STANDARD_FLUENCE, c.size) if fluences is None else fluences
    return StressTrace(f, c, 1e6)


def test_standardize_cuts_and_pads():
    t = _trace([1.0, 2.0, 3.0], [0.0, 4e9, 8e9])
    cut = standardize_fluence(t)
    assert list(cut.fluences) == [0.0, 4e9, 6e9] and cut.currents[-1] == 2.5
    short = standardize_fluence(_trace([1.0, 0.8], [0.0, 4e9]))
    assert list(short.fluences) == [0.0, 4e9, 6e9] and short.currents[-1] == 0.8


def test_filter_constant_unchanged():
    t = _trace(np.ones(50))
    out = filter_point_outliers(t, 5.0, 5)
    assert np.array_equal(out.currents, t.currents)


def test_filter_removes_spike():
    c = np.ones(50)
    c[20] = 100.0
    out = filter_point_outliers(_trace(c), 5.0, 5)
    assert len(out) == 49 and np.all(out.currents == 1.0)


def test_filter_short_trace_unchanged():
    t = _trace([1.0, 100.0, 1.0])
    assert len(filter_point_outliers(t, 5.0, 5)) == 3


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-3, 1e3), min_size=2, max_size=80))
def test_filter_keeps_endpoints(values):
    t = _trace(values)
    out = filter_point_outliers(t, 5.0, 5)
    assert len(out) <= len(t)
    assert out.currents[0] == t.currents[0] and out.currents[-1] == t.currents[-1]
    assert np.all(np.diff(out.fluences) >= 0)


def test_cloud_points_removed(small_corpus):
    records, truths = small_corpus
    rec, truth = inject_outlier(records[0], truths[0], OutlierClass.CLOUD, seed=3)
    mask = point_outlier_mask(rec.trace.currents)
    assert np.mean(mask[list(truth.cloud_indices)]) >= 0.9


def test_clean_trace_no_outlier():
    assert classify_device_outlier(_trace(np.ones(100))) is None


def test_instant_decline_rule():
    c = np.ones(1000)
    f = np.linspace(0, STANDARD_FLUENCE, 1000)
    c[f >= 0.01 * STANDARD_FLUENCE] = 0.4
    assert classify_device_outlier(_trace(c, f)) is OutlierClass.INSTANT_CURRENT_DECLINE


def _pass_device(index=1, vth=None, **kw):
    params = SynthManifest(failure_fraction=0.0, outlier_rates={}, **kw)
    return generate_device("A", index, StressCondition(25, 685), params, seed=11, vth=vth)


@pytest.mark.parametrize("kind", list(OutlierClass))
def test_injected_class_detected(kind):
    rec, truth = _pass_device()
    assert truth.status == PASS
    rec2, truth2 = inject_outlier(rec, truth, kind, seed=5)
    assert truth2.outlier_class is kind
    cfg = OutlierRuleConfig(reference_current=truth.shape.baseline)
    assert classify_device_outlier(rec2.trace, cfg) is kind


def test_injection_deterministic():
    rec, truth = _pass_device()
    a, _ = inject_outlier(rec, truth, OutlierClass.CLOUD, seed=5)
    b, _ = inject_outlier(rec, truth, OutlierClass.CLOUD, seed=5)
    assert np.array_equal(a.trace.currents, b.trace.currents)


def test_outlier_rules_total():
    cfg = OutlierRuleConfig(reference_current=1.0)
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 60))
        c = rng.lognormal(size=n) * rng.choice([0.0, 1.0], size=n, p=[0.05, 0.95])
        res = classify_device_outlier(_trace(c), cfg)
        assert res is None or isinstance(res, OutlierClass)
        assert classify_device_outlier(_trace(c), cfg) == res


def test_threshold_voltage_linear_midpoint():
    s = IVSweep(SweepKind.THRESHOLD, [0.0, 2.0], [0.0, 2e-6], 10.0)
    assert extract_threshold_voltage(s, 1e-6) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(DataError):
        extract_threshold_voltage(s, 1e-5)


def test_planted_vth_recovered_exactly_without_noise():
    rec, _ = _pass_device(vth=3.058, noise_sigma=0.0)
    assert extract_threshold_voltage(rec.pre_sweeps[SweepKind.THRESHOLD]) == pytest.approx(3.058, abs=1e-12)


def test_planted_vth_recovered_with_noise():
    rec, _ = _pass_device(vth=3.058)
    assert abs(extract_threshold_voltage(rec.pre_sweeps[SweepKind.THRESHOLD]) - 3.058) <= 0.01


def test_design_matrix_schema(default_preprocessed):
    pf = default_preprocessed.pipeline
    dm = assemble_design_matrix(pf.rows, pf.grids)
    n_sweep = pf.grids["vgsigs"].count
    assert dm.X.shape == (224, 10 + 3 + 2 * n_sweep)
    assert set(np.unique(dm.y)) <= {0.0, 1.0}
    assert np.all(np.isfinite(dm.X))
    assert np.all(dm.X[:, dm.column_mask("mfr_")].sum(axis=1) == 1)
    assert list(dm.columns[10:13]) == ["temperature_c", "bias_voltage_v", "avg_vth_v"]
    idx = list(range(0, 241, 10))
    dm2 = assemble_design_matrix(pf.rows, pf.grids, idx)
    assert dm2.y.shape == (224, 25)
    assert np.array_equal(dm2.y[:, -1], [r.flu[240] for r in pf.rows])


def test_design_matrix_empty_and_rows_independent(default_preprocessed):
    pf = default_preprocessed.pipeline
    empty = assemble_design_matrix([], pf.grids, manufacturers=list("ABCDEFGHIJ"))
    full = assemble_design_matrix(pf.rows, pf.grids)
    assert empty.X.shape == (0, full.X.shape[1]) and empty.columns == full.columns
    part = assemble_design_matrix(pf.rows[5:9], pf.grids, manufacturers=list("ABCDEFGHIJ"))
    assert np.array_equal(part.X, full.X[5:9])
    assert np.array_equal(predictor_row(pf.rows[5], list("ABCDEFGHIJ")), full.X[5])


def test_design_matrix_rejects_outlier_rows(default_preprocessed):
    pf = default_preprocessed.pipeline
    r = pf.rows[0]
    bad = r.__class__(r.device_id, r.temperature, r.bias_voltage, r.avg_vth, r.vgsigs, r.vdsids, r.flu,
                      DeviceStatus.outlier(OutlierClass.CLOUD))
    with pytest.raises(ContractError):
        assemble_design_matrix([bad], pf.grids)
