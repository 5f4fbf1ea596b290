"""Grid-search tuning of the PID baseline gains on the nominal plant.

Per-axis gains are parameterized by a target bandwidth wn and damping
ratio zeta against the axis inertia (kp = I wn^2, kd = 2 zeta wn I) plus
an integral fraction (ki = r kp).  Each candidate runs the standard
three-step attitude profile on the stock airframe; candidates that leave
any axis unsettled are discarded, the rest are ranked by total settling
time with an overshoot penalty.  The winner is printed in the form used
by quadsmc.controllers.PidGains defaults.

Run from the repository root:  python tools/tune_pid.py
"""

import itertools
import math

import numpy as np

from quadsmc.analysis import step_metrics
from quadsmc.controllers import PidGains
from quadsmc.dynamics import QuadParams
from quadsmc.simulation import PidSpec, ReferenceStep, Scenario, run_scenario

PROFILE = [
    ReferenceStep(0.5, "roll", math.radians(-10)),
    ReferenceStep(0.5, "pitch", math.radians(10)),
    ReferenceStep(2.0, "yaw", math.radians(45)),
]

WN_GRID = (8.0, 10.0, 14.0, 18.0, 24.0)
ZETA_GRID = (0.8, 0.9, 1.1)
KI_RATIO_GRID = (0.0, 0.1, 0.2)

# Among candidates within this factor of the best score, prefer the one
# with the most integral action: a pure PD baseline droops under steady
# disturbance torque.
NEAR_BEST = 1.10


def candidate_gains(wn: float, zeta: float, ki_ratio: float) -> PidGains:
    inertia = np.diag(QuadParams().inertia.nominal)
    kp = inertia * wn**2
    kd = 2.0 * zeta * wn * inertia
    return PidGains(kp=kp, ki=ki_ratio * kp, kd=kd, integral_limit=1.0)


def score(gains: PidGains) -> tuple[float, list]:
    scn = Scenario(
        duration=5.0, reference_schedule=PROFILE, controller=PidSpec(gains=gains)
    )
    trace = run_scenario(scn)
    if trace.aborted:
        return math.inf, []
    metrics = [step_metrics(trace, ev) for ev in trace.meta.reference_events]
    if any(m.settling_time is None for m in metrics):
        return math.inf, metrics
    total = sum(m.settling_time for m in metrics)
    penalty = sum(max(0.0, m.overshoot - 10.0) for m in metrics) * 0.05
    return total + penalty, metrics


def main() -> None:
    results = []
    for wn, zeta, ki_ratio in itertools.product(WN_GRID, ZETA_GRID, KI_RATIO_GRID):
        gains = candidate_gains(wn, zeta, ki_ratio)
        value, metrics = score(gains)
        tag = f"wn={wn:5.1f} zeta={zeta:3.1f} ki/kp={ki_ratio:3.1f}"
        if metrics and value < math.inf:
            detail = " ".join(
                f"{m.axis[:1]}:{m.settling_time:.2f}s/{m.overshoot:.0f}%" for m in metrics
            )
            print(f"{tag}  score={value:6.3f}  {detail}")
            results.append((value, ki_ratio, (wn, zeta, ki_ratio), gains))
        else:
            print(f"{tag}  unsettled")
    best_value = min(v for v, *_ in results)
    near = [r for r in results if r[0] <= best_value * NEAR_BEST]
    _, _, params, gains = max(near, key=lambda r: (r[1], -r[0]))
    print("\nchosen:", params, "(best score", round(best_value, 3), ")")
    print("kp =", np.round(gains.kp, 4).tolist())
    print("ki =", np.round(gains.ki, 4).tolist())
    print("kd =", np.round(gains.kd, 4).tolist())


if __name__ == "__main__":
    main()
