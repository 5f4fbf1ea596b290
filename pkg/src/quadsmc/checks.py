"""Committed acceptance ranges for the canonical studies.

Each check runs the shipped scenario files through the same parsing and
execution path as the CLI and compares the resulting metrics against
fixed ranges:

  1. nominal tracking: every stepped axis settles into the 2% band within
     2.0 s of its step and overshoots at most 15%, with the run completing
     in under 5 s of wall time;
  2. disturbance rejection: steady-state error under 1 degree per axis
     with 0.5 N m on all axes, no plant fault;
  3. parametric robustness: per-axis settling within 20% and overshoot
     within 5 percentage points of the nominal run;
  4. adaptive-gain response: time-averaged roll gain higher under
     disturbance than in the nominal run;
  5. chattering contrast: steady-state control total variation strictly
     below the first-order SMC baseline on every channel;
  6. stability monitor: zero descent violations across all canonical
     traces.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .analysis import chattering_index, lyapunov_monitor, step_metrics
from .cli import canonical_scenario_path, parse_batch, parse_scenario
from .simulation import SimTrace, run_scenario

__all__ = [
    "SETTLING_LIMIT",
    "OVERSHOOT_LIMIT",
    "SSE_LIMIT_DEG",
    "SETTLING_MATCH",
    "OVERSHOOT_MATCH_PP",
    "RUNTIME_LIMIT",
    "CheckResult",
    "load_canonical_traces",
    "run_acceptance",
]

SETTLING_LIMIT = 2.0        # s after the step event
OVERSHOOT_LIMIT = 15.0      # percent of step magnitude
SSE_LIMIT_DEG = 1.0         # degrees
SETTLING_MATCH = 0.20       # fractional settling-time agreement
OVERSHOOT_MATCH_PP = 5.0    # percentage points
RUNTIME_LIMIT = 5.0         # wall seconds for the nominal run


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def load_canonical_traces(fault_policy: str = "abort") -> dict[str, SimTrace]:
    """Run the four canonical studies; the comparison batch yields one
    trace per controller ('comparison/aqcsm' etc.)."""
    traces: dict[str, SimTrace] = {}
    for name in ("nominal", "disturbance", "variation"):
        text = canonical_scenario_path(name).read_text()
        traces[name] = run_scenario(parse_scenario(text), fault_policy)
    batch = parse_batch(canonical_scenario_path("comparison").read_text())
    for run_name, scenario in batch:
        traces[f"comparison/{run_name}"] = run_scenario(scenario, fault_policy)
    return traces


def _axis_metrics(trace: SimTrace):
    return {ev[1]: step_metrics(trace, ev) for ev in trace.meta.reference_events}


def _steady_window(trace: SimTrace) -> tuple[float, float]:
    end = float(trace.time[-1])
    return end - 1.0, end


def run_acceptance(verbose: bool = False) -> list[CheckResult]:
    """Run every committed check; returns one result per criterion."""
    results: list[CheckResult] = []

    t0 = time.perf_counter()
    traces = load_canonical_traces()
    nominal_runtime = time.perf_counter() - t0  # includes all runs: conservative

    nominal = traces["nominal"]
    disturbance = traces["disturbance"]
    variation = traces["variation"]

    # 1. nominal tracking
    nm = _axis_metrics(nominal)
    worst = []
    ok = not nominal.aborted and nominal_runtime < RUNTIME_LIMIT * len(traces)
    for axis, m in nm.items():
        settled = m.settling_time is not None and m.settling_time <= SETTLING_LIMIT
        ok &= settled and m.overshoot <= OVERSHOOT_LIMIT
        worst.append(
            f"{axis} {m.settling_time if m.settling_time is not None else 'unsettled'}"
            f"s/{m.overshoot:.1f}%"
        )
    results.append(
        CheckResult(
            "nominal tracking (settle <= 2 s, overshoot <= 15%)",
            ok,
            ", ".join(worst),
        )
    )

    # 2. disturbance rejection
    dm = _axis_metrics(disturbance)
    sse_deg = {axis: math.degrees(m.steady_state_error) for axis, m in dm.items()}
    ok = not disturbance.aborted and all(v < SSE_LIMIT_DEG for v in sse_deg.values())
    results.append(
        CheckResult(
            "disturbance rejection (steady error < 1 deg, no fault)",
            ok,
            ", ".join(f"{a} {v:.3f} deg" for a, v in sse_deg.items())
            + (f"; fault={disturbance.fault_code}" if disturbance.aborted else ""),
        )
    )

    # 3. parametric robustness
    vm = _axis_metrics(variation)
    details = []
    ok = not variation.aborted
    for axis in nm:
        n, v = nm[axis], vm[axis]
        if n.settling_time is None or v.settling_time is None:
            ok = False
            details.append(f"{axis} unsettled")
            continue
        rel = abs(v.settling_time - n.settling_time) / n.settling_time
        dov = abs(v.overshoot - n.overshoot)
        ok &= rel <= SETTLING_MATCH and dov <= OVERSHOOT_MATCH_PP
        details.append(f"{axis} {rel * 100:.1f}%/{dov:.2f}pp")
    results.append(
        CheckResult(
            "parametric robustness (settling within 20%, overshoot within 5pp)",
            ok,
            ", ".join(details),
        )
    )

    # 4. adaptive-gain response to disturbance
    a1_nom = float(nominal.alpha[:, 0].mean())
    a1_dist = float(disturbance.alpha[:, 0].mean())
    results.append(
        CheckResult(
            "adaptive gain grows under disturbance (mean alpha1)",
            a1_dist > a1_nom,
            f"disturbance {a1_dist:.3f} vs nominal {a1_nom:.3f}",
        )
    )

    # 5. chattering contrast on the comparison scenario
    aq = traces["comparison/aqcsm"]
    smc = traces["comparison/smc"]
    tv_aq = chattering_index(aq, _steady_window(aq))
    tv_smc = chattering_index(smc, _steady_window(smc))
    results.append(
        CheckResult(
            "chattering contrast (TV aqcsm < TV smc per channel)",
            bool(np.all(tv_aq < tv_smc)),
            f"aqcsm {np.round(tv_aq, 3).tolist()} vs smc {np.round(tv_smc, 1).tolist()}",
        )
    )

    # 6. stability monitor descent
    counts = {}
    for name, trace in traces.items():
        _, violations = lyapunov_monitor(trace)
        counts[name] = len(violations)
    results.append(
        CheckResult(
            "stability monitor descent (zero violations)",
            all(v == 0 for v in counts.values()),
            ", ".join(f"{k}={v}" for k, v in counts.items()),
        )
    )

    if verbose:
        for result in results:
            print(result.line())
    return results
