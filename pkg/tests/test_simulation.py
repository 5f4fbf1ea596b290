import dataclasses
import math

import numpy as np
import pytest
from scipy.linalg import expm

from quadsmc.dynamics import (
    BodyRates,
    EulerAngles,
    IndefiniteInertia,
    QuadParams,
    RateCapExceeded,
    TorqueVector,
)
from quadsmc.simulation import (
    AqcsmSpec,
    DisturbancePulse,
    PidSpec,
    ReferenceShaper,
    ReferenceStep,
    Scenario,
    SmcSpec,
    apply_variation,
    rk4,
    rk4_step,
    run_scenario,
)

# Published airframe-uncertainty pattern used by the variation study.
DELTA_I_FULL = np.array(
    [[0.0, 0.0044, -0.0077], [0.0044, 0.0, 0.0115], [-0.0077, 0.0115, 0.0]]
)


@pytest.fixture
def params():
    return QuadParams()


def steps_profile():
    return [
        ReferenceStep(0.5, "roll", math.radians(-10)),
        ReferenceStep(0.5, "pitch", math.radians(10)),
        ReferenceStep(2.0, "yaw", math.radians(45)),
    ]


class TestRk4Kernel:
    def test_matches_matrix_exponential_at_fourth_order(self):
        # Error against the exact linear-system propagator must shrink at
        # least 15x when the step halves (fourth-order local accuracy).
        rng = np.random.default_rng(7)
        a = rng.normal(size=(6, 6)) - 1.5 * np.eye(6)
        y0 = rng.normal(size=6)

        def err(dt):
            y = rk4(lambda y: a @ y, y0, dt)
            return np.linalg.norm(y - expm(a * dt) @ y0)

        assert err(0.01) / err(0.005) >= 15.0

    def test_equilibrium_state_unchanged(self, params):
        state = (EulerAngles(0, 0, 0), BodyRates(0, 0, 0))
        angles, rates = rk4_step(
            state, TorqueVector.zero(), TorqueVector.zero(), params, 1e-3
        )
        np.testing.assert_array_equal(angles.as_array(), np.zeros(3))
        np.testing.assert_array_equal(rates.as_array(), np.zeros(3))

    def test_torque_free_principal_spin_invariant(self, params):
        state = (EulerAngles(0, 0, 0), BodyRates(0.3, 0, 0))
        for _ in range(1000):
            state = rk4_step(
                state, TorqueVector.zero(), TorqueVector.zero(), params, 1e-3
            )
        w = state[1].as_array()
        assert abs(w[0] - 0.3) < 1e-10
        assert abs(w[1]) < 1e-10 and abs(w[2]) < 1e-10

    def test_torque_free_energy_conserved(self, params):
        # Rotational kinetic energy is an exact invariant of the continuous
        # dynamics; one simulated second must hold it to 1e-6 relative.
        state = (EulerAngles(0.05, -0.04, 0.1), BodyRates(0.3, -0.4, 0.5))
        inertia = params.inertia.effective

        def energy(s):
            w = s[1].as_array()
            return 0.5 * w @ inertia @ w

        e0 = energy(state)
        for _ in range(1000):
            state = rk4_step(
                state, TorqueVector.zero(), TorqueVector.zero(), params, 1e-3
            )
            assert abs(energy(state) - e0) / e0 < 1e-6

    def test_rate_cap_raises(self, params):
        state = (EulerAngles(0, 0, 0), BodyRates(49.9, 0, 0))
        with pytest.raises(RateCapExceeded):
            rk4_step(state, TorqueVector(5, 0, 0), TorqueVector.zero(), params, 0.1)

    def test_rejects_nonpositive_dt(self, params):
        with pytest.raises(ValueError):
            rk4_step(
                (EulerAngles(0, 0, 0), BodyRates(0, 0, 0)),
                TorqueVector.zero(),
                TorqueVector.zero(),
                params,
                0.0,
            )

    def test_full_torque_mode_feels_rotor_gyroscopics(self, params):
        state = (EulerAngles(0, 0, 0), BodyRates(0, 1.0, 0))
        plain = rk4_step(
            state, TorqueVector.zero(), TorqueVector.zero(), params, 1e-3
        )
        spun = rk4_step(
            state,
            TorqueVector.zero(),
            TorqueVector.zero(),
            params,
            1e-3,
            plant_mode="full-torque",
            rotor_speeds=np.array([0.0, 400.0, 0.0, 400.0]),
        )
        # Residual rotor momentum with pitch rate produces roll acceleration.
        assert abs(spun[1].p - plain[1].p) > 1e-6


class TestReferenceShaper:
    def test_raw_steps_jump_with_zero_derivatives(self):
        shaper = ReferenceShaper([ReferenceStep(1.0, "roll", 0.5)], tau=None)
        before, after = shaper.at(0.999), shaper.at(1.0)
        assert before.theta_d.phi == 0.0
        assert after.theta_d.phi == 0.5
        np.testing.assert_array_equal(after.theta_d_dot, np.zeros(3))
        np.testing.assert_array_equal(after.theta_d_ddot, np.zeros(3))

    def test_shaped_value_continuous_and_converging(self):
        shaper = ReferenceShaper([ReferenceStep(1.0, "roll", 0.5)], tau=0.05)
        at_event = shaper.at(1.0)
        assert at_event.theta_d.phi == pytest.approx(0.0, abs=1e-12)
        assert shaper.at(1.0 + 0.5).theta_d.phi == pytest.approx(0.5, abs=1e-4)

    def test_shaped_derivatives_match_finite_differences(self):
        shaper = ReferenceShaper([ReferenceStep(0.5, "pitch", 0.3)], tau=0.05)
        h = 1e-7
        for t in (0.55, 0.6, 0.75):
            ref = shaper.at(t)
            v_p = shaper.at(t + h).theta_d.theta
            v_m = shaper.at(t - h).theta_d.theta
            assert ref.theta_d_dot[1] == pytest.approx((v_p - v_m) / (2 * h), rel=1e-6)
            d_p = shaper.at(t + h).theta_d_dot[1]
            d_m = shaper.at(t - h).theta_d_dot[1]
            assert ref.theta_d_ddot[1] == pytest.approx((d_p - d_m) / (2 * h), rel=1e-6)

    def test_chained_segments_start_from_current_value(self):
        shaper = ReferenceShaper(
            [ReferenceStep(0.0, "yaw", 1.0), ReferenceStep(0.1, "yaw", 0.0)], tau=0.05
        )
        value_at_switch = 1.0 - math.exp(-2.0)  # first segment at t = 0.1
        assert shaper.at(0.1).theta_d.psi == pytest.approx(value_at_switch, rel=1e-12)


class TestScenarioValidation:
    def test_rejects_non_multiple_control_period(self):
        with pytest.raises(ValueError, match="integer multiple"):
            Scenario(dt_plant=1e-3, dt_control=2.5e-3)

    def test_rejects_unsorted_schedule(self):
        with pytest.raises(ValueError, match="sorted"):
            Scenario(
                reference_schedule=[
                    ReferenceStep(1.0, "roll", 0.1),
                    ReferenceStep(0.5, "roll", 0.2),
                ]
            )

    def test_rejects_bad_axis(self):
        with pytest.raises(ValueError, match="axis"):
            ReferenceStep(0.5, "surge", 0.1)

    def test_rejects_bad_plant_mode(self):
        with pytest.raises(ValueError, match="plant_mode"):
            Scenario(plant_mode="hybrid")

    def test_rejects_inverted_disturbance_window(self):
        with pytest.raises(ValueError):
            DisturbancePulse(2.0, 1.0, np.zeros(3))


class TestRunScenario:
    def test_hold_at_zero_stays_at_zero(self):
        trace = run_scenario(Scenario(duration=1.0))
        np.testing.assert_array_equal(trace.theta, np.zeros_like(trace.theta))
        np.testing.assert_array_equal(trace.u, np.zeros_like(trace.u))
        assert not trace.aborted

    def test_record_count_matches_grid(self):
        trace = run_scenario(Scenario(duration=5.0, reference_schedule=steps_profile()))
        assert len(trace) == 5001

    def test_deterministic_reruns_bit_identical(self):
        scn = Scenario(duration=2.0, reference_schedule=steps_profile())
        a = run_scenario(scn)
        b = run_scenario(scn)
        for name in ("time", "theta", "omega", "sigma", "alpha", "u", "v0", "v"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_zero_order_hold_between_controller_ticks(self):
        scn = Scenario(
            duration=1.0,
            dt_plant=2e-4,
            dt_control=1e-3,
            reference_schedule=[ReferenceStep(0.2, "roll", 0.2)],
        )
        trace = run_scenario(scn)
        whole = (len(trace) // 5) * 5
        for block in trace.u[:whole].reshape(-1, 5, 3):
            np.testing.assert_array_equal(block, np.broadcast_to(block[0], block.shape))

    def test_grid_refinement_converges(self):
        base = Scenario(duration=3.0, reference_schedule=steps_profile()[:2])
        coarse = run_scenario(base)
        fine = dataclasses.replace(base, dt_plant=5e-4)
        refined = run_scenario(fine)
        assert np.all(np.abs(coarse.theta[-1] - refined.theta[-1]) < 1e-5)

    def test_rate_cap_fault_aborts_with_partial_trace(self):
        scn = Scenario(
            duration=2.0,
            disturbance_schedule=[DisturbancePulse(0.0, 2.0, np.array([50.0, 0, 0]))],
        )
        trace = run_scenario(scn)
        assert trace.aborted and trace.fault_code in ("rate_cap", "attitude_limit")
        assert trace.fault_time is not None
        assert len(trace) < 2001
        assert trace.fault[-1] != ""

    def test_flag_policy_continues_past_rate_cap(self):
        scn = Scenario(
            duration=0.5,
            disturbance_schedule=[DisturbancePulse(0.0, 0.5, np.array([50.0, 0, 0]))],
        )
        trace = run_scenario(scn, fault_policy="flag")
        assert trace.fault_code != ""
        assert not trace.aborted  # flagged, not truncated
        assert len(trace) == 501  # ran to completion

    def test_smc_and_pid_controllers_run(self):
        for spec in (SmcSpec(), PidSpec()):
            trace = run_scenario(
                Scenario(
                    duration=3.0,
                    reference_schedule=[ReferenceStep(0.5, "yaw", math.radians(45))],
                    controller=spec,
                )
            )
            assert not trace.aborted
            # yaw reaches the reference without divergence
            assert abs(math.degrees(trace.theta[-1, 2]) - 45.0) < 3.0

    def test_pid_defaults_settle_nominal_profile(self):
        # Gains frozen from the tools/tune_pid.py grid search must settle
        # every axis into the 2% band on the nominal plant.
        from quadsmc.analysis import step_metrics

        trace = run_scenario(
            Scenario(duration=5.0, reference_schedule=steps_profile(),
                     controller=PidSpec())
        )
        for event in trace.meta.reference_events:
            assert step_metrics(trace, event).settled

    def test_all_controllers_reach_yaw_reference(self):
        # Qualitative cross-controller claim: every controller drives yaw
        # to the 45 degree reference on the nominal plant.
        for spec in (AqcsmSpec(), SmcSpec(), PidSpec()):
            trace = run_scenario(
                Scenario(duration=5.0, reference_schedule=steps_profile(),
                         controller=spec)
            )
            assert not trace.aborted
            assert abs(math.degrees(trace.theta[-1, 2]) - 45.0) < 3.0

    def test_sigma_stays_inside_dead_band_after_settling(self):
        trace = run_scenario(
            Scenario(duration=5.0, reference_schedule=steps_profile())
        )
        eps = trace.meta.epsilon
        settled = trace.time > 4.0
        assert np.all(np.abs(trace.sigma[settled]) < eps)

    def test_alpha_respects_floor_and_ceiling(self):
        trace = run_scenario(
            Scenario(duration=5.0, reference_schedule=steps_profile())
        )
        spec = AqcsmSpec()
        floor = np.minimum(spec.adaptation.alpha_m, spec.adaptation.alpha)
        assert np.all(trace.alpha >= floor * (1 - 1e-12))
        assert np.all(trace.alpha <= spec.u_max + 1e-12)


class TestApplyVariation:
    def test_identity_variation(self, params):
        out = apply_variation(params, 0.0, np.zeros((3, 3)))
        assert out.m == params.m
        np.testing.assert_array_equal(out.inertia.effective, params.inertia.effective)

    def test_half_scale_uncertainty_is_positive_definite(self, params):
        out = apply_variation(params, 0.8, 0.5 * DELTA_I_FULL)
        assert out.m == pytest.approx(2.3)
        eff = out.inertia.effective
        np.testing.assert_array_equal(eff, eff.T)
        assert np.all(np.linalg.eigvalsh(eff) > 0)

    def test_full_scale_uncertainty_is_indefinite(self, params):
        # Eigenvalue oracle: the published pattern at full magnitude makes
        # the summed inertia indefinite, so it must be rejected.
        assert np.linalg.eigvalsh(
            params.inertia.nominal + DELTA_I_FULL
        ).min() < 0
        with pytest.raises(IndefiniteInertia):
            apply_variation(params, 0.8, DELTA_I_FULL)

    def test_cancelling_nominal_is_indefinite(self, params):
        with pytest.raises(IndefiniteInertia):
            apply_variation(params, 0.0, -params.inertia.nominal)

    def test_controller_keeps_nominal_inertia(self, params):
        varied = apply_variation(params, 0.8, 0.5 * DELTA_I_FULL)
        trace = run_scenario(
            Scenario(
                duration=1.0,
                reference_schedule=[ReferenceStep(0.2, "roll", 0.1)],
                params=varied,
            )
        )
        np.testing.assert_array_equal(trace.meta.inertia_nominal, params.inertia.nominal)
        np.testing.assert_array_equal(trace.meta.inertia_delta, 0.5 * DELTA_I_FULL)
