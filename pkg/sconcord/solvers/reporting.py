"""Trace and report assembly shared by the iterative solvers."""

from __future__ import annotations

import math
from typing import Iterable, List, Optional

import numpy as np

from sconcord.core.oracle import OracleHandle
from sconcord.model.schemas import OracleCallCounts, SolveReport, SolveStatus, TraceRecord


def call_counts(oracle: OracleHandle) -> OracleCallCounts:
    return OracleCallCounts(**oracle.snapshot_calls().as_dict())


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


def running_min(values: Iterable[Optional[float]]) -> Optional[float]:
    finite = [v for v in values if v is not None and math.isfinite(v)]
    return min(finite) if finite else None


def build_report(
    method: str,
    status: SolveStatus,
    x: np.ndarray,
    f_x: float,
    nu: Optional[float],
    trace: List[TraceRecord],
    oracle: OracleHandle,
    best_f: float,
    min_nu: Optional[float],
    iterations: int,
    message: Optional[str] = None,
) -> SolveReport:
    return SolveReport(
        method=method,
        status=status,
        final_point=[float(v) for v in x],
        final_f=float(f_x),
        final_nu=_finite_or_none(nu),
        best_f=float(best_f),
        min_nu_so_far=_finite_or_none(min_nu),
        iterations=iterations,
        trace=trace,
        oracle_calls=call_counts(oracle),
        message=message,
    )
