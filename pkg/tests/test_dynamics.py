"""Kinematics, torque and mixer unit tests.

Expected values come from independent paths: direct trig substitution,
hand-written Rodrigues rotations, and linear-algebra identities -- never
from the functions under test.
"""

import math
import warnings

import numpy as np
import pytest

from quadsmc.dynamics import (
    BodyRates,
    DegenerateAttitude,
    EulerAngles,
    IndefiniteInertia,
    InertiaMatrix,
    MotorForces,
    QuadParams,
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

RNG_SEED = 20240811


@pytest.fixture
def params():
    return QuadParams()


def random_attitudes(n, margin=0.01, seed=RNG_SEED):
    rng = np.random.default_rng(seed)
    half_pi = math.pi / 2
    phi = rng.uniform(-half_pi + margin, half_pi - margin, n)
    theta = rng.uniform(-half_pi + margin, half_pi - margin, n)
    psi = rng.uniform(-math.pi, math.pi, n)
    return [EulerAngles(*row) for row in zip(phi, theta, psi)]


class TestEulerRateTransform:
    def test_identity_at_zero(self):
        np.testing.assert_array_equal(
            euler_rate_transform(EulerAngles(0, 0, 0)), np.eye(3)
        )

    def test_gimbal_lock_raises(self):
        with pytest.raises(DegenerateAttitude):
            euler_rate_transform(EulerAngles(0, math.pi / 2 - 1e-12, 0))

    def test_hand_substitution(self):
        # Theta = (pi/6, pi/3, 0), Theta_dot = ones: omega written out by hand.
        angles = EulerAngles(math.pi / 6, math.pi / 3, 0.0)
        h = euler_rate_transform(angles)
        np.testing.assert_allclose(h[0], [1.0, 0.0, -math.sin(math.pi / 3)], atol=0)
        expected_omega = np.array(
            [
                1.0 - math.sin(math.pi / 3),
                math.cos(math.pi / 6) + math.cos(math.pi / 3) * math.sin(math.pi / 6),
                -math.sin(math.pi / 6) + math.cos(math.pi / 3) * math.cos(math.pi / 6),
            ]
        )
        np.testing.assert_allclose(h @ np.ones(3), expected_omega, rtol=1e-15)

    def test_inverse_composes_to_identity(self):
        for angles in random_attitudes(200):
            prod = euler_rate_transform(angles) @ euler_rate_inverse(angles)
            np.testing.assert_allclose(prod, np.eye(3), atol=1e-10)

    def test_determinant_is_cos_theta(self):
        for angles in random_attitudes(50, seed=7):
            assert np.linalg.det(euler_rate_transform(angles)) == pytest.approx(
                math.cos(angles.theta), rel=1e-12
            )


class TestRotationMatrix:
    def test_identity_at_zero(self):
        np.testing.assert_array_equal(rotation_matrix(EulerAngles(0, 0, 0)), np.eye(3))

    def test_pure_yaw_quarter_turn(self):
        r = rotation_matrix(EulerAngles(0, 0, math.pi / 2))
        np.testing.assert_allclose(r[:, 0], [0.0, 1.0, 0.0], atol=1e-15)

    def test_orthonormal_and_proper(self):
        for angles in random_attitudes(1000):
            r = rotation_matrix(angles)
            assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-12
            assert abs(np.linalg.det(r) - 1.0) < 1e-12


class TestSkew:
    def test_zero(self):
        np.testing.assert_array_equal(skew(BodyRates(0, 0, 0)), np.zeros((3, 3)))

    def test_pattern(self):
        s = skew(BodyRates(1, 2, 3))
        np.testing.assert_array_equal(
            s, np.array([[0, -3, 2], [3, 0, -1], [-2, 1, 0]], dtype=float)
        )

    def test_exactly_antisymmetric_and_annihilates_omega(self):
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(100):
            w = BodyRates(*rng.uniform(-20, 20, 3))
            s = skew(w)
            assert np.array_equal(s, -s.T)
            np.testing.assert_allclose(s @ w.as_array(), np.zeros(3), atol=1e-13)


class TestMixer:
    def test_symmetric_hover(self, params):
        u, thrust = mix_forces(MotorForces(1, 1, 1, 1), params)
        np.testing.assert_array_equal(u.as_array(), np.zeros(3))
        assert thrust == 4.0

    def test_single_rotor_substitution(self, params):
        # F2 alone: roll torque l*F2, no pitch, yaw +c*F2, unit thrust.
        u, thrust = mix_forces(MotorForces(0, 1, 0, 0), params)
        np.testing.assert_allclose(
            np.append(u.as_array(), thrust), [0.205, 0.0, 0.01, 1.0], atol=0
        )

    def test_round_trip_random(self, params):
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(200):
            f = MotorForces(*rng.uniform(0, 6, 4))
            u, thrust = mix_forces(f, params)
            back = unmix_controls(u, thrust, params)
            np.testing.assert_allclose(back.as_array(), f.as_array(), atol=1e-10)

    def test_unmix_hover(self, params):
        forces = unmix_controls(TorqueVector.zero(), 4.0, params)
        np.testing.assert_allclose(forces.as_array(), np.ones(4), atol=1e-12)

    def test_unmix_recovers_single_rotor(self, params):
        forces = unmix_controls(TorqueVector(0.205, 0.0, 0.01), 1.0, params)
        np.testing.assert_allclose(forces.as_array(), [0, 1, 0, 0], atol=1e-12)

    def test_infeasible_torque_warns_and_clamps(self, params):
        with pytest.warns(SaturationWarning):
            forces = unmix_controls(TorqueVector(10.0, 0.0, 0.0), 0.1, params)
        assert np.all(forces.as_array() >= 0.0)

    def test_mixer_invertible(self, params):
        assert abs(np.linalg.det(mixer_matrix(params))) > 1e-12


class TestGyroTorques:
    def test_all_zero_at_rest(self, params):
        tau_b, tau_p, tau_a = gyro_torques(
            BodyRates(0, 0, 0), np.array([300.0, 250.0, 310.0, 260.0]), params
        )
        for tau in (tau_b, tau_p, tau_a):
            np.testing.assert_array_equal(tau.as_array(), np.zeros(3))

    def test_principal_axis_spin_no_body_torque(self, params):
        tau_b, _, _ = gyro_torques(BodyRates(1, 0, 0), np.zeros(4), params)
        np.testing.assert_allclose(tau_b.as_array(), np.zeros(3), atol=1e-15)

    def test_balanced_rotors_cancel(self, params):
        _, tau_p, _ = gyro_torques(
            BodyRates(0, 1, 0), np.array([100.0, 100.0, 100.0, 100.0]), params
        )
        np.testing.assert_array_equal(tau_p.as_array(), np.zeros(3))

    def test_residual_rotor_speed_substitution(self):
        p = QuadParams(I_r=1e-4)
        _, tau_p, _ = gyro_torques(
            BodyRates(0, 1, 0), np.array([0.0, 100.0, 0.0, 100.0]), p
        )
        np.testing.assert_allclose(tau_p.as_array(), [0.02, 0.0, 0.0], rtol=1e-12)

    def test_friction_opposes_rotation_both_signs(self, params):
        for sign in (+1.0, -1.0):
            w = BodyRates(sign * 2.0, 0.0, sign * 3.0)
            _, _, tau_a = gyro_torques(w, np.zeros(4), params)
            # Dissipation: friction torque has the sign of the rate, and the
            # plant subtracts it.
            assert tau_a.u_phi == pytest.approx(sign * params.k_a[0] * 4.0)
            assert tau_a.u_psi == pytest.approx(sign * params.k_a[2] * 9.0)


def rodrigues(axis_times_angle: np.ndarray) -> np.ndarray:
    """Hand-written rotation exp map, independent of the package."""
    angle = np.linalg.norm(axis_times_angle)
    if angle < 1e-300:
        return np.eye(3)
    n = axis_times_angle / angle
    k = np.array([[0, -n[2], n[1]], [n[2], 0, -n[0]], [-n[1], n[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


class TestAttitudeDerivative:
    def test_equilibrium(self, params):
        out = attitude_derivative(
            BodyRates(0, 0, 0), TorqueVector.zero(), TorqueVector.zero(), params.inertia
        )
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_principal_axis(self, params):
        out = attitude_derivative(
            BodyRates(1, 0, 0), TorqueVector.zero(), TorqueVector.zero(), params.inertia
        )
        np.testing.assert_allclose(out, np.zeros(3), atol=1e-15)

    def test_momentum_conservation_oracle(self, params):
        # Torque-free: inertial angular momentum R I w is constant.  Rotate
        # the body by +/- h w (Rodrigues), map the constant momentum back to
        # the body frame, and central-difference the implied rate history.
        w0 = np.array([0.1, 0.2, 0.0])
        inertia = params.inertia.effective
        momentum = inertia @ w0
        h = 1e-6
        w_plus = np.linalg.solve(inertia, rodrigues(h * w0).T @ momentum)
        w_minus = np.linalg.solve(inertia, rodrigues(-h * w0).T @ momentum)
        oracle = (w_plus - w_minus) / (2 * h)
        out = attitude_derivative(
            BodyRates(*w0), TorqueVector.zero(), TorqueVector.zero(), params.inertia
        )
        np.testing.assert_allclose(out, oracle, atol=1e-8)

    def test_torque_and_disturbance_superpose(self, params):
        w = BodyRates(0.3, -0.2, 0.1)
        u = TorqueVector(0.4, -0.1, 0.2)
        d = TorqueVector(-0.05, 0.02, 0.01)
        combined = attitude_derivative(w, u, d, params.inertia)
        split = attitude_derivative(
            w, TorqueVector.zero(), TorqueVector.zero(), params.inertia
        ) + np.linalg.solve(
            params.inertia.effective, u.as_array() + d.as_array()
        )
        np.testing.assert_allclose(combined, split, atol=1e-15)

    def test_uses_effective_inertia(self):
        delta = np.array([[0, 1e-3, 0], [1e-3, 0, 0], [0, 0, 0]])
        inertia = InertiaMatrix(np.diag([0.01, 0.02, 0.03]), delta)
        out = attitude_derivative(
            BodyRates(0, 0, 0), TorqueVector(1e-3, 0, 0), TorqueVector.zero(), inertia
        )
        oracle = np.linalg.solve(np.diag([0.01, 0.02, 0.03]) + delta, [1e-3, 0, 0])
        np.testing.assert_allclose(out, oracle, atol=1e-15)


class TestInertiaMatrix:
    def test_rejects_non_diagonal_nominal(self):
        with pytest.raises(ValueError, match="diagonal"):
            InertiaMatrix(np.array([[1.0, 0.1, 0], [0.1, 1, 0], [0, 0, 1]]))

    def test_rejects_indefinite_effective(self):
        nominal = np.diag([0.01, 0.02, 0.03])
        with pytest.raises(IndefiniteInertia):
            InertiaMatrix(nominal, delta=-nominal)

    def test_rejects_asymmetric_delta(self):
        with pytest.raises(ValueError, match="symmetric"):
            InertiaMatrix(np.diag([1.0, 1, 1]), delta=np.triu(np.full((3, 3), 0.1), 1))


class TestQuadParams:
    def test_rejects_nonpositive_mass(self):
        with pytest.raises(ValueError):
            QuadParams(m=0.0)

    def test_rejects_negative_friction(self):
        with pytest.raises(ValueError):
            QuadParams(k_a=np.array([1e-4, -1e-4, 1e-4]))

    def test_hover_thrust(self, params):
        assert params.hover_thrust() == pytest.approx(1.5 * 9.81)


class TestMotorForces:
    def test_rejects_negative_thrust(self):
        with pytest.raises(ValueError):
            MotorForces(1.0, -0.1, 1.0, 1.0)


def test_no_warning_for_feasible_unmix(params):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        unmix_controls(TorqueVector(0.1, 0.1, 0.01), params.hover_thrust(), params)
