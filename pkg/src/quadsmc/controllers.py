"""Attitude controllers: adaptive quasi-continuous SMC, first-order SMC, PID.

Conventions
-----------
All sliding-mode laws here act on the *measured-minus-reference* tracking
error e = Theta - Theta_d (yaw wrapped to the shortest rotation) and its
rate.  With that orientation the negative-feedback quasi-continuous law

    u = -alpha (x_dot + |x|^(1/2) sign x) / (|x_dot| + |x|^(1/2) + delta)

is stabilizing.  Traces and metrics elsewhere report the tracking error
with the opposite, plotting-friendly sign (reference minus measured).

The adaptive controller applies the law per axis to the (error,
error-rate) pair, whose second derivative carries the control torque
directly, and drives the gain adaptation with the sliding variable
sigma = e_dot + Lambda e.  The gain grows at omega_bar |sigma| while
|sigma| exceeds the dead-band epsilon, decays inside it, and is floored at
alpha_m with a slow eta-rate recovery; |u| <= alpha holds identically.

The delta term in the denominator is a regularization of the law's
discontinuity at the origin.  At delta = 0 the law is the exact
quasi-continuous form (continuous everywhere apart from the origin); a
delta comparable to the closed-loop rate scale turns the immediate
neighbourhood of the origin into a smooth high-gain zone, which suppresses
the sampling-induced micro-chattering of a discrete implementation without
affecting the reaching phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    BodyRates,
    EulerAngles,
    InertiaMatrix,
    TorqueVector,
    euler_rate_inverse,
    skew,
)

__all__ = [
    "NonFinite",
    "SurfaceGains",
    "SlidingState",
    "AdaptiveGainState",
    "ReferenceSignal",
    "PidGains",
    "PidState",
    "AqcsmConfig",
    "AqcsmState",
    "SmcConfig",
    "wrap_angle",
    "tracking_errors",
    "sliding_surface",
    "sigma_derivative",
    "qcsm_control",
    "adapt_gain",
    "aqcsm_step",
    "smc_step",
    "pid_step",
]

# Dead zone at the (x, x_dot) origin, where the unregularized law is 0/0.
ORIGIN_TOL = 1e-12


class NonFinite(ArithmeticError):
    """A controller input or intermediate became NaN/Inf."""


def wrap_angle(x: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(x + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class SurfaceGains:
    """Sliding-surface slopes (1/s), the diagonal of Lambda; all positive."""

    lambda_phi: float = 4.68
    lambda_theta: float = 4.68
    lambda_psi: float = 3.84

    def __post_init__(self):
        if min(self.lambda_phi, self.lambda_theta, self.lambda_psi) <= 0:
            raise ValueError("surface gains must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.lambda_phi, self.lambda_theta, self.lambda_psi])


@dataclass(frozen=True)
class SlidingState:
    """Per-axis sliding variable (rad/s) and the rate signal the law used."""

    sigma: np.ndarray
    sigma_dot: np.ndarray

    @classmethod
    def zero(cls) -> "SlidingState":
        return cls(np.zeros(3), np.zeros(3))


@dataclass(frozen=True)
class AdaptiveGainState:
    """Adaptive control gains and their adaptation parameters.

    alpha is the live per-axis gain (N m); omega_bar scales growth/decay
    against |sigma|, epsilon is the dead-band width on |sigma|, eta the
    floor-recovery rate, alpha_m the gain floor and alpha_max the ceiling
    (the actuator limit).

    dead_band_decay selects the decay law inside the dead-band:
    "proportional" is omega_bar |sigma| (which stalls as tracking becomes
    exact, freezing the gain at its transient peak in a noiseless loop);
    "edge" decays at the constant band-edge rate omega_bar epsilon, so the
    gain always relaxes to the floor after transients.  Both grow
    identically outside the dead-band.
    """

    alpha: np.ndarray = field(default_factory=lambda: np.full(3, 1.24))
    alpha_0: float = 1.24
    omega_bar: np.ndarray = field(default_factory=lambda: np.full(3, 200.0))
    epsilon: np.ndarray = field(default_factory=lambda: np.full(3, 0.7))
    eta: np.ndarray = field(default_factory=lambda: np.full(3, 0.01))
    alpha_m: np.ndarray = field(default_factory=lambda: np.array([0.01, 0.02, 0.03]))
    alpha_max: float = 5.0
    dead_band_decay: str = "proportional"

    def __post_init__(self):
        for name in ("alpha", "omega_bar", "epsilon", "eta", "alpha_m"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.alpha <= 0):
            raise ValueError("alpha must start positive")
        for name in ("omega_bar", "epsilon", "eta", "alpha_m"):
            if np.any(getattr(self, name) <= 0):
                raise ValueError(f"{name} must be positive")
        if self.dead_band_decay not in ("proportional", "edge"):
            raise ValueError(f"unknown dead_band_decay {self.dead_band_decay!r}")


@dataclass(frozen=True)
class ReferenceSignal:
    """Reference attitude with its first and second time derivatives (bounded)."""

    theta_d: EulerAngles
    theta_d_dot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    theta_d_ddot: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class PidGains:
    """Per-axis PID gains with an anti-windup clamp on the integral term.

    Defaults were selected by the grid search in tools/tune_pid.py against
    the nominal plant (see that script for the search space and criterion).
    """

    kp: np.ndarray = field(default_factory=lambda: np.array([5.0976, 8.9280, 13.2998]))
    ki: np.ndarray = field(default_factory=lambda: np.array([0.5098, 0.8928, 1.3300]))
    kd: np.ndarray = field(default_factory=lambda: np.array([0.3823, 0.6696, 0.9975]))
    integral_limit: float = 1.0

    def __post_init__(self):
        for name in ("kp", "ki", "kd"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))


@dataclass(frozen=True)
class PidState:
    """Accumulated integral of the tracking error (rad s)."""

    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class AqcsmConfig:
    """Configuration of the adaptive quasi-continuous sliding-mode controller.

    delta regularizes the law's origin (see module docstring); the default
    is calibrated for a 1 kHz control loop on the stock airframe.

    rate_source selects the error-rate signal: "euler" converts the
    measured body rates through the exact kinematic transform (default),
    "body" uses the raw body rates (small-rotation identification of omega
    with the Euler-angle rates; blind to yaw-induced roll/pitch drift at
    large yaw rates), and "filtered" low-passes a finite difference of the
    error (time constant 5 control periods) for rate-sensorless studies.
    """

    gains: SurfaceGains = field(default_factory=SurfaceGains)
    u_max: float = 5.0
    delta: float = 0.35
    rate_source: str = "euler"

    def __post_init__(self):
        if self.rate_source not in ("euler", "body", "filtered"):
            raise ValueError(f"unknown rate_source {self.rate_source!r}")
        if self.u_max <= 0:
            raise ValueError("u_max must be positive")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")


@dataclass(frozen=True)
class AqcsmState:
    """Controller state carried between ticks."""

    sliding: SlidingState
    gains: AdaptiveGainState
    u_prev: TorqueVector = field(default_factory=TorqueVector.zero)
    e_prev: np.ndarray | None = None
    rate_filter: np.ndarray | None = None

    @classmethod
    def initial(cls, gains: AdaptiveGainState | None = None) -> "AqcsmState":
        return cls(SlidingState.zero(), gains if gains is not None else AdaptiveGainState())


@dataclass(frozen=True)
class SmcConfig:
    """Fixed-gain first-order sliding-mode baseline: u = -alpha sign(sigma)."""

    gains: SurfaceGains = field(default_factory=SurfaceGains)
    alpha: np.ndarray = field(default_factory=lambda: np.full(3, 1.24))
    u_max: float = 5.0
    rate_source: str = "euler"

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        if self.rate_source not in ("euler", "body"):
            raise ValueError(f"unknown rate_source {self.rate_source!r}")


def tracking_errors(
    angles: EulerAngles,
    w: BodyRates,
    ref: ReferenceSignal,
    rate_source: str = "euler",
) -> tuple[np.ndarray, np.ndarray]:
    """Measured-minus-reference error and rate, yaw wrapped to (-pi, pi].

    rate_source "euler" maps the body rates through the exact kinematic
    transform; "body" uses them directly (small-rotation approximation).
    """
    e = angles.as_array() - ref.theta_d.as_array()
    e[2] = wrap_angle(e[2])
    if rate_source == "euler":
        rates = euler_rate_inverse(angles) @ w.as_array()
    else:
        rates = w.as_array()
    return e, rates - ref.theta_d_dot


def sliding_surface(e: np.ndarray, e_dot: np.ndarray, gains: SurfaceGains) -> np.ndarray:
    """sigma_i = e_dot_i + lambda_i e_i, componentwise."""
    return np.asarray(e_dot, dtype=float) + gains.as_array() * np.asarray(e, dtype=float)


def sigma_derivative(
    e_dot: np.ndarray,
    ref: ReferenceSignal,
    w: BodyRates,
    u_prev: TorqueVector,
    inertia: InertiaMatrix,
    gains: SurfaceGains,
) -> np.ndarray:
    """Model-based estimate of the sliding-variable rate, nominal inertia only.

        sigma_dot = -Theta_d_ddot + Lambda e_dot
                    + I0^-1 (-S(omega) I0 omega + U_prev)

    Assumes zero disturbance and zero inertia uncertainty, with the
    previous control held over the step.  Diagnostic: this is the
    controller's internal view, not plant truth.
    """
    nominal = inertia.nominal
    omega = w.as_array()
    model_acc = np.linalg.solve(
        nominal, -skew(w) @ (nominal @ omega) + u_prev.as_array()
    )
    return -ref.theta_d_ddot + gains.as_array() * np.asarray(e_dot, dtype=float) + model_acc


def qcsm_control(sigma: float, sigma_dot: float, alpha: float, delta: float = 0.0) -> float:
    """Quasi-continuous second-order sliding-mode law for one axis.

        u = -alpha (sigma_dot + |sigma|^(1/2) sign sigma)
                   / (|sigma_dot| + |sigma|^(1/2) + delta)

    At delta = 0 this is continuous everywhere except the origin, where
    u = 0 by convention (both |sigma| and |sigma_dot| below 1e-12);
    |u| <= alpha holds identically and for sigma_dot = 0 the law reduces
    to -alpha sign(sigma) exactly.  A positive delta smooths the origin
    (see module docstring) at the cost of those exact identities.
    """
    if abs(sigma) < ORIGIN_TOL and abs(sigma_dot) < ORIGIN_TOL:
        return 0.0
    root = math.sqrt(abs(sigma))
    sgn = math.copysign(1.0, sigma) if sigma != 0.0 else 0.0
    numer = sigma_dot + root * sgn
    denom = abs(sigma_dot) + root + delta
    # |numer| <= denom holds in floating point, so the quotient is formed
    # first to keep |u| <= alpha exact.
    return -alpha * (numer / denom)


def adapt_gain(state: AdaptiveGainState, sigma: np.ndarray, dt: float) -> AdaptiveGainState:
    """One forward-Euler update of the adaptive gains.

    While alpha_i > alpha_m_i the gain grows at omega_bar_i |sigma_i|
    outside the dead-band |sigma_i| > epsilon_i and decays inside it
    (proportionally to |sigma_i|, or at the constant band-edge rate
    omega_bar_i epsilon_i in "edge" mode); decay is floored at alpha_m_i
    so a single large step cannot cross below the threshold.  At or under
    the floor the gain recovers at eta_i.  The result is strictly positive
    for any positive starting gain.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    abs_sigma = np.abs(np.asarray(sigma, dtype=float))
    alpha = state.alpha
    above = alpha > state.alpha_m
    outside = abs_sigma > state.epsilon
    grow = state.omega_bar * abs_sigma
    if state.dead_band_decay == "edge":
        decay = state.omega_bar * state.epsilon
    else:
        decay = state.omega_bar * abs_sigma
    rate = np.where(outside, grow, -decay)
    moved = np.maximum(alpha + rate * dt, state.alpha_m)
    recovered = alpha + state.eta * dt
    return replace(state, alpha=np.where(above, moved, recovered))


def _check_finite(*arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFinite(f"non-finite controller quantity: {a}")


def aqcsm_step(
    angles: EulerAngles,
    w: BodyRates,
    ref: ReferenceSignal,
    state: AqcsmState,
    cfg: AqcsmConfig,
    dt: float,
) -> tuple[TorqueVector, AqcsmState]:
    """One control period of the adaptive quasi-continuous SMC.

    Applies the quasi-continuous law per axis to the (error, error-rate)
    pair with the current adaptive gains, clamps to the actuator limit,
    and advances the gain adaptation driven by the sliding variable
    sigma = e_dot + Lambda e.  Raises NonFinite on NaN/Inf inputs or
    intermediates.
    """
    _check_finite(angles.as_array(), w.as_array())
    if cfg.rate_source == "filtered":
        e = angles.as_array() - ref.theta_d.as_array()
        e[2] = wrap_angle(e[2])
        prev_e = state.e_prev if state.e_prev is not None else e
        prev_f = state.rate_filter if state.rate_filter is not None else np.zeros(3)
        # First-order low-pass (time constant 5 dt) of the error difference.
        raw = (e - prev_e) / dt
        e_dot = prev_f + 0.2 * (raw - prev_f)
        filter_state = (e.copy(), e_dot.copy())
    else:
        e, e_dot = tracking_errors(angles, w, ref, cfg.rate_source)
        filter_state = (None, None)

    sigma = sliding_surface(e, e_dot, cfg.gains)
    _check_finite(sigma, e_dot)

    alpha = state.gains.alpha
    u = np.array(
        [qcsm_control(e[i], e_dot[i], alpha[i], cfg.delta) for i in range(3)]
    )
    u = np.clip(u, -cfg.u_max, cfg.u_max)
    _check_finite(u)

    new_gains = adapt_gain(state.gains, sigma, dt)
    if np.any(new_gains.alpha > new_gains.alpha_max):
        new_gains = replace(
            new_gains, alpha=np.minimum(new_gains.alpha, new_gains.alpha_max)
        )
    torque = TorqueVector.from_array(u)
    return torque, AqcsmState(
        SlidingState(sigma, e_dot), new_gains, torque, *filter_state
    )


def smc_step(
    angles: EulerAngles,
    w: BodyRates,
    ref: ReferenceSignal,
    cfg: SmcConfig,
    dt: float,
) -> TorqueVector:
    """Fixed-gain first-order sliding-mode baseline, u_i = -alpha_i sign(sigma_i).

    sign(0) = 0, so no torque is injected at exact equilibrium.  Stateless;
    dt is accepted for interface uniformity.
    """
    _check_finite(angles.as_array(), w.as_array())
    e, e_dot = tracking_errors(angles, w, ref, cfg.rate_source)
    sigma = sliding_surface(e, e_dot, cfg.gains)
    _check_finite(sigma)
    u = np.clip(-cfg.alpha * np.sign(sigma), -cfg.u_max, cfg.u_max)
    return TorqueVector.from_array(u)


def pid_step(
    angles: EulerAngles,
    w: BodyRates,
    ref: ReferenceSignal,
    gains: PidGains,
    state: PidState,
    dt: float,
) -> tuple[TorqueVector, PidState]:
    """Per-axis PID on e = Theta_d - Theta with derivative on measurement.

    The derivative term uses the measured body rates (no reference-rate
    kick on steps); the integral is clamped to +/- integral_limit.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = ref.theta_d.as_array() - angles.as_array()
    e[2] = wrap_angle(e[2])
    integral = np.clip(
        state.integral + e * dt, -gains.integral_limit, gains.integral_limit
    )
    u = gains.kp * e + gains.ki * integral - gains.kd * w.as_array()
    return TorqueVector.from_array(u), PidState(integral)
