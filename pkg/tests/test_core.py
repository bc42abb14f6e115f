import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radfit.core import (
    FAIL,
    PASS,
    BenchmarkGrid,
    DataError,
    DeviceId,
    DeviceStatus,
    DomainError,
    OutlierClass,
    StressCondition,
    StressTrace,
    classify_trace_status,
    compute_fit,
    mtbf_from_fit,
    running_median,
)


def test_fit_hand_arithmetic():
    # 5 / (24 * 6e9) * 1e6 * 3600 * 1e9 = 1.25e8, and 1e9 / 1.25e8 = 8 h
    r = compute_fit(5, 24, 6.0e9, 1e6)
    assert r.fit == pytest.approx(1.25e8, rel=1e-12)
    assert r.mtbf == pytest.approx(8.0, rel=1e-12)


def test_fit_zero_failures_gives_infinite_mtbf():
    r = compute_fit(0, 24, 6.0e9, 1e6)
    assert r.fit == 0.0
    assert r.mtbf_infinite and math.isinf(r.mtbf)


@pytest.mark.parametrize(
    "args",
    [(1, 0, 6e9, 1e6), (1, 24, 0.0, 1e6), (1, 24, 6e9, -1.0), (25, 24, 6e9, 1e6), (-1, 24, 6e9, 1e6)],
)
def test_fit_rejects_invalid_inputs(args):
    with pytest.raises(DomainError):
        compute_fit(*args)


def test_mtbf_rejects_negative_fit():
    with pytest.raises(DomainError):
        mtbf_from_fit(-1.0)


valid_fit_args = st.integers(1, 500).flatmap(
    lambda total: st.tuples(
        st.integers(0, total),
        st.just(total),
        st.floats(1e6, 1e12),
        st.floats(1e2, 1e9),
    )
)


@settings(max_examples=200, deadline=None)
@given(valid_fit_args)
def test_fit_linear_in_failed_count(args):
    k, n, flu, flux = args
    assert compute_fit(k, n, flu, flux).fit == pytest.approx(k * compute_fit(1, n, flu, flux).fit, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(valid_fit_args, st.floats(1.0, 10.0))
def test_fit_monotone(args, factor):
    k, n, flu, flux = args
    base = compute_fit(k, n, flu, flux).fit
    assert compute_fit(k, n, flu, flux * factor).fit >= base
    assert compute_fit(k, n, flu * factor, flux).fit <= base
    assert compute_fit(k, n + 1, flu, flux).fit <= base
    if k < n:
        assert compute_fit(k + 1, n, flu, flux).fit >= base


def test_device_id_render_and_parse():
    d = DeviceId("A", 1)
    assert str(d) == "A_1"
    assert DeviceId.parse("K_24") == DeviceId("K", 24)
    with pytest.raises(DataError):
        DeviceId.parse("a_1")
    with pytest.raises(DomainError):
        DeviceId("A", 0)


@given(st.sampled_from("ABCDEFGHIJK"), st.integers(1, 24))
def test_device_id_round_trip(m, i):
    d = DeviceId(m, i)
    assert DeviceId.parse(str(d)) == d


def test_stress_condition_checks():
    StressCondition(25, 685)
    with pytest.raises(DomainError):
        StressCondition(100, 685)
    with pytest.raises(DomainError):
        StressCondition(150, 0)


def test_status_parse_round_trip():
    for s in (PASS, FAIL, *(DeviceStatus.outlier(k) for k in OutlierClass)):
        assert DeviceStatus.parse(str(s)) == s
    with pytest.raises(DataError):
        DeviceStatus.parse("Outlier:Nope")
    with pytest.raises(DomainError):
        DeviceStatus("Outlier")


def test_trace_problems_listed_not_raised():
    t = StressTrace([0.0, 2.0, 1.0], [1.0, 1.0, 1.0], 0.0)
    assert set(t.problems()) == {"non-monotone fluence", "non-positive flux"}
    with pytest.raises(DataError):
        StressTrace([0.0], [1.0], 1.0)


def _trace(currents):
    return StressTrace(np.arange(len(currents), dtype=float), currents, 1e6)


def test_status_single_spike_does_not_fail():
    c = np.ones(40)
    c[20] = 0.1
    assert classify_trace_status(_trace(c)) == PASS


def test_status_sustained_drop_fails():
    c = np.ones(40)
    c[20:] = 0.85
    assert classify_trace_status(_trace(c)) == FAIL


def test_status_threshold_is_strict():
    c = np.ones(40)
    c[20:] = 0.9
    assert classify_trace_status(_trace(c)) == PASS


def test_status_degenerate_baseline():
    with pytest.raises(DataError):
        classify_trace_status(_trace(np.zeros(10)))
    with pytest.raises(DomainError):
        classify_trace_status(_trace(np.ones(10)), drop_fraction=1.0)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(1e-3, 1e3), min_size=6, max_size=60),
    st.floats(1e-6, 1e6),
)
def test_status_scale_invariant(values, alpha):
    c = np.array(values)
    assert classify_trace_status(_trace(c)) == classify_trace_status(_trace(alpha * c))


def test_running_median_matches_direct():
    rng = np.random.default_rng(0)
    x = rng.normal(size=30)
    out = running_median(x, 3)
    assert out[0] == np.median(x[:2]) and out[-1] == np.median(x[-2:])
    assert np.array_equal(out[1:-1], [np.median(x[i - 1:i + 2]) for i in range(1, 29)])


def test_benchmark_grid_invariants():
    g = BenchmarkGrid("fluence", [0.0, 1.0, 2.0])
    assert (g.start, g.end, g.count) == (0.0, 2.0, 3)
    with pytest.raises((DataError, DomainError)):
        BenchmarkGrid("fluence", [0.0, 0.0, 1.0])
    with pytest.raises((DataError, DomainError)):
        BenchmarkGrid("fluence", [0.0])
