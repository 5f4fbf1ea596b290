"""Post-processing of simulation traces.

Step-response metrics use the 2% settling convention: settling time is the
first instant after which the tracked angle stays within 2% of the step
magnitude of its target through the end of the evaluation window.
Chattering is quantified as the total variation of the control signal over
a steady-state window.  The stability monitor evaluates the quadratic
sliding energy V0 = sigma^T I sigma / 2 and its gain-augmented variant

    V = V0 + sum_i (alpha_i - alpha_M_i)^2 / (2 gamma_i)

where alpha_M_i is the running maximum of the adaptive gain over the trace
(a diagnostic proxy for the unknown true gain ceiling), and flags any step
whose V increase exceeds a tolerance while every axis is outside the
adaptation dead-band -- inside the dead-band the gain decays by design and
V may rise benignly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # imported for annotations only; runtime import would be circular
    from .simulation import SimTrace

__all__ = [
    "TOL_V",
    "StepMetrics",
    "LyapunovRecord",
    "GainBoundReport",
    "step_metrics",
    "chattering_index",
    "lyapunov_monitor",
    "gain_bound_check",
]

# Per-step tolerance on V increases outside the dead-band.
TOL_V = 1e-6

_AXES = ("roll", "pitch", "yaw")


@dataclass(frozen=True)
class StepMetrics:
    """Step-response quality for one axis and one reference step event.

    settling_time is measured from the step event (s), None if the 2% band
    is never held through the end of the window; overshoot is the peak
    excursion beyond the target in the step direction as a percentage of
    the step magnitude; steady_state_error is the largest |angle - target|
    over the final tenth of the window (rad); peak_control is the largest
    commanded torque magnitude on the stepped axis (N m).
    """

    axis: str
    settling_time: float | None
    overshoot: float
    steady_state_error: float
    peak_control: float

    @property
    def settled(self) -> bool:
        return self.settling_time is not None


@dataclass(frozen=True)
class LyapunovRecord:
    time: float
    v0: float
    v: float
    delta_v: float


@dataclass(frozen=True)
class GainBoundReport:
    """Reconstruction of the lumped model-error/disturbance torque.

    xi[k, i] is the torque (N m) the gain on axis i had to dominate at step
    k, rebuilt from recorded plant truth (effective inertia, rates,
    reference derivatives, disturbance).  coverage[i] is the fraction of
    sliding-phase samples with alpha_i >= |xi_i|; the sliding phase starts
    at the first sample with |sigma_i| inside the dead-band (None if the
    axis never reaches it).
    """

    xi: np.ndarray
    coverage: np.ndarray
    sliding_start: list[int | None]


def _axis_index(axis: str) -> int:
    if axis not in _AXES:
        raise ValueError(f"axis must be one of {_AXES}, got {axis!r}")
    return _AXES.index(axis)


def step_metrics(
    trace: "SimTrace", event: tuple[float, str, float]
) -> StepMetrics:
    """Quantify the response of one axis to one reference step.

    `event` is (time, axis, target in rad).  The evaluation window runs
    from the event to the next recorded change of that axis's reference
    target, or to the end of the trace.
    """
    t_event, axis, target = event
    i = _axis_index(axis)
    time = trace.time
    if not time[0] <= t_event <= time[-1]:
        raise ValueError(f"event time {t_event} outside trace [{time[0]}, {time[-1]}]")
    k0 = int(np.searchsorted(time, t_event - 1e-12))

    # Window ends at the next scheduled event on the same axis, if any.
    k1 = len(time) - 1
    later = [
        ev_t
        for ev_t, ev_axis, _ in trace.meta.reference_events
        if ev_axis == axis and ev_t > t_event
    ]
    if later:
        k1 = max(k0, int(np.searchsorted(time, min(later) - 1e-12)) - 1)

    # Step magnitude is measured against the reference just before the event
    # (the reference may jump exactly at the event sample).
    theta_d = trace.theta_d[:, i]
    prior = theta_d[max(k0 - 1, 0)]
    step = target - prior
    if abs(step) < 1e-12:
        raise ValueError("degenerate step event: target equals prior reference")

    angle = trace.theta[k0 : k1 + 1, i]
    dev = np.abs(angle - target)
    band = 0.02 * abs(step)

    outside = np.flatnonzero(dev > band)
    if outside.size and outside[-1] == len(angle) - 1:
        settling = None
    elif outside.size:
        settling = float(trace.time[k0 + outside[-1] + 1] - t_event)
    else:
        settling = 0.0

    direction = np.sign(step)
    overshoot = max(0.0, float(np.max(direction * (angle - target)))) / abs(step) * 100.0

    tail = max(1, (k1 + 1 - k0) // 10)
    sse = float(np.max(dev[-tail:]))
    peak_u = float(np.max(np.abs(trace.u[k0 : k1 + 1, i])))
    return StepMetrics(axis, settling, overshoot, sse, peak_u)


def chattering_index(trace: "SimTrace", window: tuple[float, float]) -> np.ndarray:
    """Per-axis total variation of the control torque over [t0, t1] (N m).

    Non-negative and additive over adjacent windows sharing an endpoint.
    """
    t0, t1 = window
    if not (trace.time[0] <= t0 < t1 <= trace.time[-1] + 1e-12):
        raise ValueError(f"window ({t0}, {t1}) not inside trace")
    k0 = int(np.searchsorted(trace.time, t0 - 1e-12))
    k1 = int(np.searchsorted(trace.time, t1 + 1e-12)) - 1
    u = trace.u[k0 : k1 + 1]
    return np.sum(np.abs(np.diff(u, axis=0)), axis=0)


def lyapunov_monitor(
    trace: "SimTrace",
    gamma: np.ndarray | None = None,
    tol_v: float = TOL_V,
) -> tuple[list[LyapunovRecord], list[int]]:
    """Evaluate the stability monitor along a trace.

    Returns the per-step records and the indices k of descent violations:
    steps with v[k] - v[k-1] > tol_v whose endpoints both lie entirely
    outside the adaptation dead-band (|sigma_i| > epsilon_i on every axis)
    and whose gains all sit strictly below their running maxima.  The
    descent property is only claimed for gains below their ceiling; while a
    gain is setting a new high (the reaching transient) the quadratic gain
    term is pinned at zero and the claim does not apply.
    """
    g = np.ones(3) if gamma is None else np.asarray(gamma, dtype=float)
    if np.any(g <= 0):
        raise ValueError("gamma must be positive")
    inertia = trace.meta.inertia_nominal + trace.meta.inertia_delta
    sigma = trace.sigma
    v0 = 0.5 * np.einsum("ki,ij,kj->k", sigma, inertia, sigma)
    alpha_m = np.maximum.accumulate(trace.alpha, axis=0)
    v = v0 + np.sum((trace.alpha - alpha_m) ** 2 / (2.0 * g), axis=1)

    records = [LyapunovRecord(trace.time[0], float(v0[0]), float(v[0]), 0.0)]
    eps = trace.meta.epsilon
    outside = np.all(np.abs(sigma) > eps, axis=1)
    below_max = np.all(trace.alpha < alpha_m, axis=1)
    violations: list[int] = []
    for k in range(1, len(v)):
        dv = float(v[k] - v[k - 1])
        records.append(LyapunovRecord(trace.time[k], float(v0[k]), float(v[k]), dv))
        if dv > tol_v and outside[k] and outside[k - 1] and below_max[k]:
            violations.append(k)
    return records, violations


def gain_bound_check(trace: "SimTrace") -> GainBoundReport:
    """Rebuild the lumped uncertainty torque from plant truth and compare to alpha.

    The reconstruction uses the effective (true) inertia, so it includes
    both the disturbance and the inertia-uncertainty contributions the
    controller never saw.
    """
    inertia = trace.meta.inertia_nominal + trace.meta.inertia_delta
    lam = trace.meta.surface_gains
    omega = trace.omega
    e_dot = omega - trace.theta_d_dot
    xi = (
        -np.cross(omega, omega @ inertia.T)
        - trace.theta_d_ddot @ inertia.T
        + (lam * e_dot) @ inertia.T
        + trace.d
    )

    eps = trace.meta.epsilon
    coverage = np.zeros(3)
    starts: list[int | None] = []
    for i in range(3):
        inside = np.flatnonzero(np.abs(trace.sigma[:, i]) <= eps[i])
        if inside.size == 0:
            starts.append(None)
            coverage[i] = np.nan
            continue
        k0 = int(inside[0])
        starts.append(k0)
        dominated = trace.alpha[k0:, i] >= np.abs(xi[k0:, i])
        coverage[i] = float(np.mean(dominated))
    return GainBoundReport(xi=xi, coverage=coverage, sliding_start=starts)
