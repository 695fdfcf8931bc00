"""Acceptance gate: one test per primary criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary under "acceptance criteria".
"""

import copy
import math
import time

import numpy as np
import pytest

from hexsim.airframe import AirframeConfig
from hexsim.cli import shipped_scenarios
from hexsim.control import (ALLOC_BOTTOM, ALLOC_TOP, Controller, ControllerConfig, Setpoint,
                            allocate, controller_tick, hover_command_jacobian, hover_trim)
from hexsim.dynamics import hover_speeds, hover_state, step
from hexsim.geometry import rot_x, rot_y, frame_tilt_rotation
from hexsim.sim import load_scenario, run_scenario

from helpers import observed_order, oracle_worst_error, spin_energy_drift

TILT_CHANNELS = ("top_roll", "top_pitch", "bottom_roll", "bottom_pitch")


@pytest.fixture(scope="module")
def shipped_runs():
    """Each shipped scenario run once at its own decimation, with wall time."""
    runs = {}
    for path in shipped_scenarios():
        sc = load_scenario(str(path))
        t0 = time.perf_counter()
        log, metrics = run_scenario(sc)
        runs[path.stem] = (sc, log, metrics, time.perf_counter() - t0)
    return runs


def test_01_open_loop_hover_holds(verdict):
    cfg = AirframeConfig()
    start = hover_state((0.0, 0.0, 1.0))
    w = hover_speeds(cfg)
    t0 = time.perf_counter()
    s = start
    for _ in range(1000):
        s = step(s, w, 0.01, cfg)
    elapsed = time.perf_counter() - t0
    drift_pos = float(np.abs(np.subtract(s.position, start.position)).max())
    drift_att = max(abs(a) for a in s.attitude.as_array())
    ok = drift_pos < 1e-6 and drift_att < 1e-6 and elapsed < 1.0
    verdict(1, "open-loop hover 10 s", ok,
            f"pos drift {drift_pos:.2e} m, att drift {drift_att:.2e} rad, {elapsed:.2f} s")


def test_02_frame_wrench_matches_oracle(verdict):
    worst = oracle_worst_error(10_000, seed=7)
    verdict(2, "frame wrench vs per-rotor oracle, 1e4 samples", worst <= 1e-12,
            f"max error {worst:.2e}")


def test_03_frame_rotation_closed_form(verdict):
    rng = np.random.default_rng(3)
    lim = math.radians(20)
    worst = 0.0
    for _ in range(1000):
        phi, theta = rng.uniform(-lim, lim, size=2)
        sp, cp, st, ct = math.sin(phi), math.cos(phi), math.sin(theta), math.cos(theta)
        expected = np.array([[ct, 0.0, st],
                             [sp * st, cp, -sp * ct],
                             [-cp * st, sp, cp * ct]])
        worst = max(worst, np.abs(frame_tilt_rotation(phi, theta) - expected).max(),
                    np.abs(rot_x(phi) @ rot_y(theta) - expected).max())
    verdict(3, "frame rotation closed form, 1e3 samples", worst <= 1e-12,
            f"max error {worst:.2e}")


def test_04_allocation_and_full_actuation(verdict):
    r_top = np.linalg.matrix_rank(ALLOC_TOP, tol=1e-9)
    r_bot = np.linalg.matrix_rank(ALLOC_BOTTOM, tol=1e-9)
    r_jac = np.linalg.matrix_rank(hover_command_jacobian(AirframeConfig(), ControllerConfig()),
                                  tol=1e-9)
    verdict(4, "allocation rank 3/3, command Jacobian rank 6",
            (r_top, r_bot, r_jac) == (3, 3, 6), f"ranks {r_top}, {r_bot}, {r_jac}")


def test_05_circle_tracking(verdict, shipped_runs):
    sc, log, m, elapsed = shipped_runs["circle_paper"]
    bounds = sc.acceptance
    t = log.column("time")
    roll, pitch = log.column("roll"), log.column("pitch")
    start_tilt = math.hypot(math.radians(1.0), math.radians(-1.0))
    late = t >= t[-1] - 5.0
    settled_tilt = float(np.hypot(roll[late], pitch[late]).max())
    # the last logged sample sits within one logging interval of the end
    completed = t[-1] >= sc.duration - 0.02
    rms_att_deg = math.degrees(m.rms_attitude_error)
    ok = (completed and m.rms_position_error < bounds["rms_position_error_max"]
          and rms_att_deg < bounds["rms_attitude_error_max_deg"]
          and settled_tilt < start_tilt and elapsed < 10.0)
    verdict(5, "circle tracking 30 s", ok,
            f"rms pos {m.rms_position_error:.4f} m, rms att {rms_att_deg:.3f} deg, "
            f"late tilt {math.degrees(settled_tilt):.3f} deg, {elapsed:.2f} s")


def test_06_translation_attitude_decoupling(verdict, shipped_runs):
    sc_x, log_x, _, _ = shipped_runs["step_x"]
    sc_a, log_a, _, _ = shipped_runs["step_attitude"]
    att_exc = float(np.abs(np.column_stack([log_x.column("roll"), log_x.column("pitch")])).max())
    base = np.asarray(sc_a.trajectory["base_position"][:2])
    horiz = np.column_stack([log_a.column("x"), log_a.column("y")]) - base
    pos_exc = float(np.linalg.norm(horiz, axis=1).max())
    att_deg = math.degrees(att_exc)
    ok = (att_deg < sc_x.acceptance["max_attitude_excursion_deg"]
          and pos_exc < sc_a.acceptance["max_position_excursion"])
    verdict(6, "0.5 m x step / 5 deg pitch step decoupling", ok,
            f"attitude excursion {att_deg:.3f} deg, position excursion {pos_exc:.4f} m")


def test_07_yaw_by_differential_speed(verdict, shipped_runs):
    u_h = hover_trim(AirframeConfig())
    pure = allocate((0.0, 0.0), (0.0, 0.0), 0.0, 0.02, 1.0, u_h)
    d_top = np.subtract(pure.raw[:3], u_h)
    d_bot = np.subtract(pure.raw[3:], u_h)
    ctrl = Controller(AirframeConfig(), ControllerConfig())
    out, _, _ = controller_tick(ctrl, Setpoint((0.0, 0.0, 1.0), (0.0, 0.0, 0.5)),
                                hover_state((0.0, 0.0, 1.0)), ctrl.initial_memory(),
                                ctrl.dt_inner)
    t_top = np.subtract(out.raw[:3], u_h)
    t_bot = np.subtract(out.raw[3:], u_h)
    differential = all(np.all(a < 0) and np.all(b > 0) and np.allclose(a, -b, atol=1e-15)
                       for a, b in ((d_top, d_bot), (t_top, t_bot)))

    sc, log, m, _ = shipped_runs["yaw_step"]
    acc = sc.acceptance
    t = log.column("time")
    err = np.degrees(np.abs(log.column("yaw") - log.column("sp_yaw")))
    step_time = float(sc.trajectory["start_time"])
    outside = t[(t >= step_time) & (err > acc["settle_tolerance_deg"])]
    settle = float(outside.max() - step_time) if outside.size else 0.0
    final = float(err[-1])
    ok = (differential and settle <= acc["settle_time_max"]
          and final <= acc["final_error_max_deg"])
    verdict(7, "yaw from top/bottom speed differential", ok,
            f"differential {differential}, settles in {settle:.2f} s, final {final:.4f} deg")


def test_08_integrator_order_and_energy(verdict):
    order = observed_order()
    drift = spin_energy_drift()
    verdict(8, "RK4 observed order and torque-free energy", order >= 3.8 and drift < 1e-8,
            f"order {order:.2f}, energy drift {drift:.1e}")


def test_09_runs_are_byte_identical(verdict, shipped_runs):
    differing = []
    for name, (sc, log, _, _) in shipped_runs.items():
        again, _ = run_scenario(copy.deepcopy(sc))
        if again.to_csv() != log.to_csv():
            differing.append(name)
    verdict(9, "repeat runs give byte-identical logs", not differing,
            f"{len(shipped_runs)} scenarios, differing: {differing or 'none'}")


def test_10_frame_tilt_within_stops(verdict, shipped_runs):
    peak = 0.0
    for _, log, _, _ in shipped_runs.values():
        for ch in TILT_CHANNELS:
            peak = max(peak, float(np.abs(log.column(ch)).max()))
    limit = math.radians(20.0) + 1e-12
    verdict(10, "logged frame tilt within mechanical stops", peak <= limit,
            f"peak {math.degrees(peak):.3f} deg over {len(shipped_runs)} scenarios")

