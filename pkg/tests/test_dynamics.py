import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hexsim.airframe import AirframeConfig
from hexsim.dynamics import (MAX_DT, NonFiniteState, StateDerivative, VehicleState,
                             body_rotational_accel, body_translational_accel, derivative_vector,
                             frame_tilt_accel, hover_speeds, hover_state, rk4_step_vector,
                             rotational_kinetic_energy, state_derivative, step)
from hexsim.geometry import EulerAngles

from helpers import observed_order, spin_energy_drift

CFG = AirframeConfig()
LIM = CFG.tilt_limit


def test_rotational_accel_examples():
    np.testing.assert_array_equal(body_rotational_accel([0, 0, 0], [0, 0, 0], CFG), 0.0)
    np.testing.assert_allclose(body_rotational_accel([0, 0, 0], [0.012, 0, 0], CFG),
                               [1.0, 0.0, 0.0], atol=1e-15)


@given(w=st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_gyroscopic_term_does_no_work(w):
    # torque-free: d/dt (1/2 w.Jw) = w . J wdot = 0
    J = np.array(CFG.inertia_body)
    wdot = body_rotational_accel(w, [0, 0, 0], CFG)
    assert float(np.dot(w, J * wdot)) == pytest.approx(0.0, abs=1e-9)


def test_translational_accel_examples():
    np.testing.assert_allclose(body_translational_accel([0.8, 0.0, 0.0], CFG), [1.0, 0.0, 0.0])
    mg = CFG.mass * CFG.gravity
    np.testing.assert_allclose(body_translational_accel([0.0, 0.0, -mg], CFG), [0, 0, -9.8])


def test_frame_tilt_accel_free_and_at_stop():
    np.testing.assert_array_equal(frame_tilt_accel([0, 0], [0, 0], [0, 0], [0, 0], CFG), 0.0)
    free = frame_tilt_accel([0.0, 0.0], [1.0, 0.0], [0.004, 0.0], [0.5, 0.0], CFG)
    assert free[0] == pytest.approx((0.004 - 0.01 * 1.0) / 0.002 + 0.5)
    # pressed outward against the +20 deg stop: held
    held = frame_tilt_accel([LIM, 0.0], [0.0, 0.0], [0.01, 0.0], [0.0, 0.0], CFG)
    assert held[0] == 0.0
    # pulled back inward: free to leave the stop
    leave = frame_tilt_accel([LIM, 0.0], [0.0, 0.0], [-0.01, 0.0], [0.0, 0.0], CFG)
    assert leave[0] < 0.0


def test_hover_derivative_is_zero():
    dx = derivative_vector(hover_state((1.0, 2.0, 3.0)).to_vector(), hover_speeds(CFG), CFG)
    np.testing.assert_allclose(dx, 0.0, atol=1e-12)


def test_hover_drift_over_ten_seconds():
    s0 = hover_state((0.0, 0.0, 1.5))
    s = s0
    w = hover_speeds(CFG)
    for _ in range(1000):
        s = step(s, w, 0.01, CFG)
    assert np.abs(s.position - s0.position).max() < 1e-6
    assert np.abs(s.attitude.as_array()).max() < 1e-6


def test_speed_differential_drives_tilt_only():
    w2 = CFG.hover_speed ** 2
    delta = 0.05 * w2
    speeds = np.sqrt([w2 + delta, w2, w2 - delta, w2, w2, w2])
    d = state_derivative(hover_state(), speeds, CFG)
    # independent evaluation: lever arms of the two perturbed rotors about x
    expected_mx = CFG.c_lift * delta * (math.sqrt(3) / 2 * CFG.arm_length) * 2
    assert d.top_tilt_rates[0] == pytest.approx(expected_mx / CFG.inertia_frame[0], rel=1e-9)
    assert d.top_tilt_rates[1] == pytest.approx(0.0, abs=1e-9)
    np.testing.assert_allclose(d.body_rates, 0.0, atol=1e-12)
    np.testing.assert_allclose(d.velocity, 0.0, atol=1e-12)
    np.testing.assert_allclose(d.bottom_tilt_rates, 0.0, atol=1e-12)


def test_zero_speeds_give_free_fall_derivative():
    s = VehicleState(attitude=EulerAngles(0.3, -0.2, 1.0), top_tilt=(0.1, 0.1))
    d = state_derivative(s, [0.0] * 6, CFG)
    np.testing.assert_allclose(d.velocity, [0.0, 0.0, -9.8], atol=1e-15)


def test_free_fall_one_second():
    s = hover_state()
    for _ in range(100):
        s = step(s, [0.0] * 6, 0.01, CFG)
    assert s.position[2] == pytest.approx(-4.9, abs=1e-6)
    assert s.velocity[2] == pytest.approx(-9.8, abs=1e-9)


def test_constant_frame_moment_is_double_integrator():
    # a very heavy body keeps the joint base still; no damping, and a negligible
    # drag couple so that tilting does not rotate a yaw torque into the joint axes
    cfg = AirframeConfig(frame_damping=0.0, inertia_body=(1e9, 1e9, 1e9), c_drag=1e-30)
    tau = 0.001
    w2 = cfg.hover_speed ** 2
    delta = tau / (math.sqrt(3) * cfg.arm_length * cfg.c_lift)
    speeds = np.sqrt([w2 + delta, w2, w2 - delta, w2, w2, w2])
    s = hover_state((0.0, 0.0, 10.0))
    dt, n = 0.001, 500
    for _ in range(n):
        s = step(s, speeds, dt, cfg)
    t = n * dt
    assert s.top_tilt[0] == pytest.approx(0.5 * tau / cfg.inertia_frame[0] * t * t, abs=1e-6)


def test_tilt_stop_holds():
    w2 = CFG.hover_speed ** 2
    speeds = np.sqrt([w2 * 1.3, w2, w2 * 0.7, w2, w2, w2])
    s = hover_state((0.0, 0.0, 50.0))
    reached = False
    for _ in range(600):
        s = step(s, speeds, 0.001, CFG)
        assert s.is_within_stops(CFG)
        if abs(s.top_tilt[0]) >= LIM - 1e-12:
            reached = True
            assert s.top_tilt_rates[0] == pytest.approx(0.0, abs=1e-9) or \
                s.top_tilt_rates[0] * s.top_tilt[0] <= 0
    assert reached


def test_energy_conserved_torque_free():
    assert spin_energy_drift() < 1e-8


def test_rk4_order():
    assert observed_order() >= 3.8


def test_kinetic_energy_helper():
    assert rotational_kinetic_energy([1.0, 0.0, 0.0], CFG) == pytest.approx(0.006)


def _five_point(f, x, i, h):
    e = np.zeros_like(x)
    e[i] = h
    return (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)


def test_jacobian_is_smooth_at_hover():
    x0 = hover_state((0.0, 0.0, 1.5)).to_vector()
    w = hover_speeds(CFG)

    def f(x):
        return derivative_vector(x, w, CFG)

    for i in range(len(x0)):
        e = np.zeros_like(x0)
        e[i] = 1e-6
        central = (f(x0 + e) - f(x0 - e)) / 2e-6
        tight = _five_point(f, x0, i, 1e-4)
        assert np.all(np.isfinite(central))
        scale = np.maximum(np.abs(tight), 1.0)
        assert np.all(np.abs(central - tight) <= 1e-4 * scale), i


def test_step_validates_dt_and_finiteness():
    s = hover_state()
    with pytest.raises(ValueError):
        step(s, hover_speeds(CFG), 0.0, CFG)
    with pytest.raises(ValueError):
        step(s, hover_speeds(CFG), MAX_DT * 2, CFG)
    x = s.to_vector()
    x[3] = float("nan")
    with pytest.raises(NonFiniteState):
        rk4_step_vector(x, hover_speeds(CFG), 0.001, CFG)
    with pytest.raises(NonFiniteState):
        VehicleState.from_vector(x)


def test_state_vector_round_trip():
    rng = np.random.default_rng(3)
    x = rng.normal(size=20)
    np.testing.assert_array_equal(VehicleState.from_vector(x).to_vector(), x)
    np.testing.assert_array_equal(StateDerivative.from_vector(x).to_vector(), x)


def test_yaw_wraps_after_step():
    s = VehicleState(position=(0, 0, 5), attitude=EulerAngles(0.0, 0.0, math.pi - 1e-4),
                     body_rates=(0.0, 0.0, 1.0))
    s = step(s, [0.0] * 6, 0.01, AirframeConfig(frame_damping=0.0))
    assert -math.pi < s.attitude.psi < 0.0
