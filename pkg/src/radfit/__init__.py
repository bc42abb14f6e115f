"""Reliability estimation for power devices from neutron beam experiments."""
from radfit.core import (
    FAIL,
    PASS,
    BenchmarkGrid,
    DeviceId,
    DeviceRecord,
    DeviceStatus,
    FitResult,
    IVSweep,
    OutlierClass,
    StressCondition,
    StressTrace,
    SweepKind,
    classify_trace_status,
    compute_fit,
    mtbf_from_fit,
)

__version__ = "0.1.0"
