"""Deterministic quadrotor attitude simulation and control.

A rigid-body attitude plant, an adaptive quasi-continuous second-order
sliding-mode controller with first-order SMC and PID baselines, a
fixed-step closed-loop scenario runner, and trace post-processing.
"""

from .analysis import (
    GainBoundReport,
    LyapunovRecord,
    StepMetrics,
    chattering_index,
    gain_bound_check,
    lyapunov_monitor,
    step_metrics,
)
from .controllers import (
    AdaptiveGainState,
    AqcsmConfig,
    AqcsmState,
    NonFinite,
    PidGains,
    PidState,
    ReferenceSignal,
    SlidingState,
    SmcConfig,
    SurfaceGains,
    adapt_gain,
    aqcsm_step,
    pid_step,
    qcsm_control,
    sigma_derivative,
    sliding_surface,
    smc_step,
    tracking_errors,
    wrap_angle,
)
from .dynamics import (
    BodyRates,
    DegenerateAttitude,
    EulerAngles,
    IndefiniteInertia,
    InertiaMatrix,
    MotorForces,
    QuadParams,
    RateCapExceeded,
    SaturationWarning,
    TorqueVector,
    attitude_derivative,
    euler_rate_inverse,
    euler_rate_transform,
    gyro_torques,
    mix_forces,
    mixer_matrix,
    rotation_matrix,
    skew,
    unmix_controls,
)
from .simulation import (
    AqcsmSpec,
    DisturbancePulse,
    PidSpec,
    ReferenceShaper,
    ReferenceStep,
    Scenario,
    SimTrace,
    SmcSpec,
    TraceMeta,
    apply_variation,
    calibrated_adaptation,
    rk4,
    rk4_step,
    run_scenario,
)
from .traceio import (
    TRACE_COLUMNS,
    read_trace_csv,
    write_metrics,
    write_trace_csv,
)

__version__ = "0.1.0"
