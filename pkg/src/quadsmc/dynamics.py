"""Rigid-body attitude dynamics of a quadrotor.

Frames and state
----------------
Orientation is parameterized by roll/pitch/yaw Euler angles
Theta = (phi, theta, psi) relating the body frame to the inertial frame
(ZYX convention).  Body angular velocity omega = (p, q, r) relates to the
Euler-angle rates through

    omega = H(Theta) @ Theta_dot,      H = [[1,      0,       -sin(th)],
                                            [0,  cos(ph),  cos(th) sin(ph)],
                                            [0, -sin(ph),  cos(th) cos(ph)]]

with det H = cos(theta), singular at |theta| = pi/2 (gimbal lock).

Torques
-------
Thrust torques enter through the mixer (arm length l, yaw coefficient c);
the rigid-body gyroscopic torque is -S(omega) I omega with S the
cross-product matrix; propeller gyroscopic torque is proportional to the
residual rotor speed; aerodynamic friction opposes rotation quadratically.
The attitude dynamics in control form are

    omega_dot = I^-1 (-S(omega) I omega + U + d)

where U is the commanded torque vector and d lumps disturbances.

Units are SI throughout: angles rad, rates rad/s, torques N m,
inertia kg m^2.  All functions are pure; thread-safe by construction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DegenerateAttitude",
    "RateCapExceeded",
    "IndefiniteInertia",
    "SaturationWarning",
    "EulerAngles",
    "BodyRates",
    "InertiaMatrix",
    "QuadParams",
    "MotorForces",
    "TorqueVector",
    "euler_rate_transform",
    "euler_rate_inverse",
    "rotation_matrix",
    "skew",
    "mixer_matrix",
    "mix_forces",
    "unmix_controls",
    "gyro_torques",
    "attitude_derivative",
]

# Gimbal-lock guard on |cos(theta)|.
COS_THETA_MIN = 1e-9


class DegenerateAttitude(ValueError):
    """Pitch is at (or numerically indistinguishable from) gimbal lock."""


class RateCapExceeded(RuntimeError):
    """A body rate exceeded the configured plausibility cap."""


class IndefiniteInertia(ValueError):
    """Effective inertia matrix is not symmetric positive-definite."""


class SaturationWarning(UserWarning):
    """Requested torque/thrust combination needs a negative rotor thrust."""


@dataclass(frozen=True)
class EulerAngles:
    """Attitude angles (rad): roll phi, pitch theta, yaw psi."""

    phi: float
    theta: float
    psi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.theta, self.psi])

    @classmethod
    def from_array(cls, a) -> "EulerAngles":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def within_limits(self) -> bool:
        """True inside the small-attitude envelope |phi|,|theta| < pi/2, |psi| <= pi."""
        half_pi = math.pi / 2
        return (
            abs(self.phi) < half_pi
            and abs(self.theta) < half_pi
            and abs(self.psi) <= math.pi
        )


@dataclass(frozen=True)
class BodyRates:
    """Body-frame angular velocity (rad/s): roll rate p, pitch rate q, yaw rate r."""

    p: float
    q: float
    r: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.q, self.r])

    @classmethod
    def from_array(cls, a) -> "BodyRates":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def is_finite(self) -> bool:
        return math.isfinite(self.p) and math.isfinite(self.q) and math.isfinite(self.r)


@dataclass
class InertiaMatrix:
    """Inertia split into a nominal part and an additive uncertainty.

    The nominal part must be diagonal with positive entries (symmetric
    airframe); the uncertainty must be symmetric.  Their sum (the effective
    inertia actually flown) must be positive-definite, checked here by an
    eigenvalue test.
    """

    nominal: np.ndarray
    delta: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        nom = np.asarray(self.nominal, dtype=float)
        if nom.shape != (3, 3):
            raise ValueError(f"nominal inertia must be 3x3, got {nom.shape}")
        if not np.allclose(nom, np.diag(np.diag(nom)), atol=0.0):
            raise ValueError("nominal inertia must be diagonal")
        if np.any(np.diag(nom) <= 0.0):
            raise ValueError("nominal inertia diagonal must be positive")
        delta = self.delta
        if delta is None:
            delta = np.zeros((3, 3))
        delta = np.asarray(delta, dtype=float)
        if delta.shape != (3, 3):
            raise ValueError(f"delta inertia must be 3x3, got {delta.shape}")
        if not np.allclose(delta, delta.T, atol=1e-12):
            raise ValueError("delta inertia must be symmetric")
        eff = nom + delta
        if np.any(np.linalg.eigvalsh(eff) <= 0.0):
            raise IndefiniteInertia(
                "effective inertia (nominal + delta) is not positive-definite"
            )
        self.nominal = nom
        self.delta = delta

    @property
    def effective(self) -> np.ndarray:
        """nominal + delta, the inertia the plant actually has (kg m^2)."""
        return self.nominal + self.delta

    @classmethod
    def from_diagonal(cls, ixx: float, iyy: float, izz: float) -> "InertiaMatrix":
        return cls(nominal=np.diag([ixx, iyy, izz]))


@dataclass
class QuadParams:
    """Physical parameters of the airframe.

    Attributes:
        m: mass (kg).
        l: arm length, motor to center of mass (m).
        g: gravitational acceleration (m/s^2).
        inertia: body inertia (nominal + uncertainty).
        b: drag factor mapping thrust sums to yaw torque (N m s^2); by
           default equal to c, see ``mixer_matrix``.
        c: force-to-torque scaling coefficient of the mixer (m).
        k_a: aerodynamic friction coefficients per axis (N m s^2/rad^2).
        I_r: rotor spin inertia (kg m^2).
        rate_cap: plausibility bound on |p|,|q|,|r| (rad/s); exceeding it
            is treated as a simulation fault, not clamped.
    """

    m: float = 1.50
    l: float = 0.205
    g: float = 9.81
    inertia: InertiaMatrix = field(
        default_factory=lambda: InertiaMatrix.from_diagonal(8.85e-3, 15.5e-3, 23.09e-3)
    )
    b: float = 0.01
    c: float = 0.01
    k_a: np.ndarray = field(default_factory=lambda: np.array([1e-4, 1e-4, 1e-4]))
    I_r: float = 3.4e-5
    rate_cap: float = 50.0

    def __post_init__(self):
        self.k_a = np.asarray(self.k_a, dtype=float)
        if self.m <= 0 or self.l <= 0 or self.g <= 0:
            raise ValueError("m, l, g must be positive")
        if self.b <= 0 or self.c <= 0:
            raise ValueError("b and c must be positive")
        if self.k_a.shape != (3,) or np.any(self.k_a < 0):
            raise ValueError("k_a must be a non-negative 3-vector")
        if self.I_r < 0:
            raise ValueError("I_r must be non-negative")
        if self.rate_cap <= 0:
            raise ValueError("rate_cap must be positive")

    def hover_thrust(self) -> float:
        """Total thrust balancing gravity (N)."""
        return self.m * self.g


@dataclass(frozen=True)
class MotorForces:
    """Individual rotor thrusts (N), thrust-only rotors (each >= 0)."""

    f1: float
    f2: float
    f3: float
    f4: float

    def __post_init__(self):
        if min(self.f1, self.f2, self.f3, self.f4) < 0.0:
            raise ValueError("rotor thrusts must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.f1, self.f2, self.f3, self.f4])


@dataclass(frozen=True)
class TorqueVector:
    """Torques about the body axes (N m)."""

    u_phi: float
    u_theta: float
    u_psi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.u_phi, self.u_theta, self.u_psi])

    @classmethod
    def from_array(cls, a) -> "TorqueVector":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    @classmethod
    def zero(cls) -> "TorqueVector":
        return cls(0.0, 0.0, 0.0)


def euler_rate_transform(angles: EulerAngles) -> np.ndarray:
    """Matrix H mapping Euler-angle rates to body rates, omega = H @ Theta_dot.

    Raises DegenerateAttitude when |cos(theta)| < 1e-9 (H singular).
    """
    c_phi, s_phi = math.cos(angles.phi), math.sin(angles.phi)
    c_th, s_th = math.cos(angles.theta), math.sin(angles.theta)
    if abs(c_th) < COS_THETA_MIN:
        raise DegenerateAttitude(
            f"gimbal lock: |cos(theta)| = {abs(c_th):.3e} at theta = {angles.theta!r}"
        )
    return np.array(
        [
            [1.0, 0.0, -s_th],
            [0.0, c_phi, c_th * s_phi],
            [0.0, -s_phi, c_th * c_phi],
        ]
    )


def euler_rate_inverse(angles: EulerAngles) -> np.ndarray:
    """Inverse of ``euler_rate_transform``: Theta_dot = H^-1 @ omega.

    Closed form; same gimbal-lock guard as the forward map.
    """
    c_phi, s_phi = math.cos(angles.phi), math.sin(angles.phi)
    c_th = math.cos(angles.theta)
    if abs(c_th) < COS_THETA_MIN:
        raise DegenerateAttitude(
            f"gimbal lock: |cos(theta)| = {abs(c_th):.3e} at theta = {angles.theta!r}"
        )
    t_th = math.tan(angles.theta)
    return np.array(
        [
            [1.0, s_phi * t_th, c_phi * t_th],
            [0.0, c_phi, -s_phi],
            [0.0, s_phi / c_th, c_phi / c_th],
        ]
    )


def rotation_matrix(angles: EulerAngles) -> np.ndarray:
    """Body-to-inertial rotation matrix (ZYX Euler angles); orthonormal, det +1."""
    c_phi, s_phi = math.cos(angles.phi), math.sin(angles.phi)
    c_th, s_th = math.cos(angles.theta), math.sin(angles.theta)
    c_psi, s_psi = math.cos(angles.psi), math.sin(angles.psi)
    return np.array(
        [
            [
                c_psi * c_th,
                c_psi * s_th * s_phi - s_psi * c_phi,
                c_psi * s_th * c_phi + s_psi * s_phi,
            ],
            [
                s_psi * c_th,
                s_psi * s_th * s_phi + c_psi * c_phi,
                s_psi * s_th * c_phi - c_psi * s_phi,
            ],
            [-s_th, c_th * s_phi, c_th * c_phi],
        ]
    )


def skew(w: BodyRates) -> np.ndarray:
    """Cross-product matrix S(omega) with S(omega) @ x = omega x x.

    Exactly antisymmetric; S(omega) @ omega = 0.
    """
    return np.array(
        [
            [0.0, -w.r, w.q],
            [w.r, 0.0, -w.p],
            [-w.q, w.p, 0.0],
        ]
    )


def mixer_matrix(params: QuadParams) -> np.ndarray:
    """4x4 map from rotor thrusts [F1..F4] to [u_phi, u_theta, u_psi, u_z].

    Rotor layout: 1 front, 2 right, 3 rear, 4 left; rotors 1/3 spin opposite
    to 2/4, hence the alternating yaw signs.  Invertible for l, c > 0.
    """
    l, c = params.l, params.c
    return np.array(
        [
            [0.0, l, 0.0, -l],
            [-l, 0.0, l, 0.0],
            [-c, c, -c, c],
            [1.0, 1.0, 1.0, 1.0],
        ]
    )


def mix_forces(f: MotorForces, params: QuadParams) -> tuple[TorqueVector, float]:
    """Thrusts -> (body torques, total thrust)."""
    out = mixer_matrix(params) @ f.as_array()
    return TorqueVector(out[0], out[1], out[2]), float(out[3])


def _unmix_array(u: np.ndarray, thrust: float, params: QuadParams) -> np.ndarray:
    """Raw mixer inversion; may return negative (infeasible) thrusts."""
    rhs = np.array([u[0], u[1], u[2], thrust])
    return np.linalg.solve(mixer_matrix(params), rhs)


def unmix_controls(
    u: TorqueVector, thrust: float, params: QuadParams
) -> MotorForces:
    """Torques + total thrust -> per-rotor thrusts.

    Exact inverse of ``mix_forces`` when feasible.  If the solution needs a
    negative rotor thrust the result is clamped to zero and a
    SaturationWarning is issued (the returned forces then no longer
    reproduce the requested torques).
    """
    forces = _unmix_array(u.as_array(), thrust, params)
    if np.any(forces < -1e-9):  # round-off at exact zero is not infeasibility
        warnings.warn(
            f"commanded torques {u.as_array()} at thrust {thrust} N are infeasible; "
            "negative rotor thrusts clamped to zero",
            SaturationWarning,
            stacklevel=2,
        )
    return MotorForces(*np.maximum(forces, 0.0))


def gyro_torques(
    w: BodyRates, rotor_speeds: np.ndarray, params: QuadParams
) -> tuple[TorqueVector, TorqueVector, TorqueVector]:
    """Body gyroscopic, propeller gyroscopic and aerodynamic friction torques.

    tau_b = -S(omega) I omega  (effective inertia)
    tau_p = I_r * Omega_r * (q, -p, 0), Omega_r = -W1 + W2 - W3 + W4
    tau_a[i] = k_a[i] * w[i] * |w[i]|   (signed, always opposing rotation)

    The quadratic friction is applied with the sign of the rate so it
    dissipates energy for either rotation direction.
    """
    omega = w.as_array()
    inertia = params.inertia.effective
    tau_b = -skew(w) @ (inertia @ omega)

    speeds = np.asarray(rotor_speeds, dtype=float)
    omega_r = -speeds[0] + speeds[1] - speeds[2] + speeds[3]
    tau_p = params.I_r * omega_r * np.array([w.q, -w.p, 0.0])

    tau_a = params.k_a * omega * np.abs(omega)
    return (
        TorqueVector(*tau_b),
        TorqueVector(*tau_p),
        TorqueVector(*tau_a),
    )


def attitude_derivative(
    w: BodyRates, u: TorqueVector, d: TorqueVector, inertia: InertiaMatrix
) -> np.ndarray:
    """Angular acceleration omega_dot = I^-1 (-S(omega) I omega + U + d).

    Uses the effective inertia.  Propeller gyroscopic and aerodynamic
    torques, when modelled, are folded into d by the caller (the plant's
    full-torque mode does this).
    """
    omega = w.as_array()
    eff = inertia.effective
    rhs = -skew(w) @ (eff @ omega) + u.as_array() + d.as_array()
    return np.linalg.solve(eff, rhs)
