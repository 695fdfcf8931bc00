import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hexsim.airframe import (AirframeConfig, ConfigError, OutOfRange, body_force_world,
                             body_moment, frame_force, frame_moment, frame_wrench, rotor_thrust)
from hexsim.geometry import EulerAngles

from helpers import literal_positions, oracle_worst_error

CFG = AirframeConfig()
LIM = math.radians(20)


def test_frame_wrench_matches_per_rotor_oracle():
    assert oracle_worst_error(2000, seed=11) <= 1e-12


def test_rotor_positions_match_layout():
    d = CFG.arm_length
    for which in ("top", "bottom"):
        np.testing.assert_allclose(CFG.rotor_positions(which),
                                   np.array(literal_positions(which, d)), atol=1e-15)


def test_default_geometry_is_balanced():
    assert CFG.is_balanced()
    assert CFG.warnings() == []


def test_literal_bottom_geometry_is_unbalanced():
    cfg = AirframeConfig(paper_literal_bottom_geometry=True)
    assert not cfg.is_balanced()
    assert any("unbalanced" in w for w in cfg.warnings())
    # r4 + r5 + r6 = (d, 0, 0): equal thrust f gives a pitching moment -d * f
    w = cfg.hover_speed
    f = cfg.c_lift * w * w
    m = frame_moment((0.0, 0.0), [w] * 3, cfg, "bottom")
    assert m[1] == pytest.approx(-cfg.arm_length * f, rel=1e-12)


def test_hover_thrust_balances_weight():
    w = CFG.hover_speed
    top = frame_force((0.0, 0.0), [w] * 3, CFG, "top")
    bottom = frame_force((0.0, 0.0), [w] * 3, CFG, "bottom")
    np.testing.assert_allclose(top, [0.0, 0.0, CFG.mass * CFG.gravity / 2], atol=1e-12)
    net = body_force_world(EulerAngles(), top, bottom, CFG)
    np.testing.assert_allclose(net, 0.0, atol=1e-12)


def test_hover_moments_vanish_except_yaw_pair():
    w = CFG.hover_speed
    top = frame_wrench((0.0, 0.0), [w] * 3, CFG, "top")
    bottom = frame_wrench((0.0, 0.0), [w] * 3, CFG, "bottom")
    np.testing.assert_allclose(top.moment[:2], 0.0, atol=1e-14)
    assert top.moment[2] == pytest.approx(-3 * CFG.c_drag * w * w)
    assert bottom.moment[2] == pytest.approx(-top.moment[2])
    np.testing.assert_allclose(body_moment(top, bottom, CFG), 0.0, atol=1e-14)


@given(phi=st.floats(-LIM, LIM), theta=st.floats(-LIM, LIM),
       w=st.lists(st.floats(0.0, 1200.0), min_size=3, max_size=3))
def test_yaw_torque_antisymmetric_between_frames(phi, theta, w):
    # same speeds and tilt on both frames: drag couples cancel exactly
    top = frame_wrench((phi, theta), w, CFG, "top")
    bottom = frame_wrench((phi, theta), w, CFG, "bottom")
    drag_t = np.array(top.moment) - np.array(frame_wrench(
        (phi, theta), w, AirframeConfig(c_drag=1e-30), "top").moment)
    drag_b = np.array(bottom.moment) - np.array(frame_wrench(
        (phi, theta), w, AirframeConfig(c_drag=1e-30), "bottom").moment)
    np.testing.assert_allclose(drag_t, -drag_b, atol=1e-12)


@given(phi=st.floats(-LIM, LIM), theta=st.floats(-LIM, LIM),
       w=st.lists(st.floats(0.0, 1200.0), min_size=3, max_size=3))
def test_thrust_norm_independent_of_tilt(phi, theta, w):
    f = frame_force((phi, theta), w, CFG)
    assert np.linalg.norm(f) == pytest.approx(CFG.c_lift * sum(v * v for v in w), rel=1e-12,
                                              abs=1e-12)


def test_body_moment_lever_arms():
    # top thrust leaning +x above the CoM pitches the body positive
    top = frame_wrench((0.0, 0.1), [CFG.hover_speed] * 3, CFG, "top")
    bottom = frame_wrench((0.0, 0.0), [CFG.hover_speed] * 3, CFG, "bottom")
    m = body_moment(top, bottom, CFG)
    assert m[1] == pytest.approx(CFG.h_top * top.force[0])
    assert m[1] > 0


def test_frame_wrench_accepts_euler_angles():
    w = [500.0, 600.0, 700.0]
    a = frame_wrench(EulerAngles(0.1, -0.05, 3.0), w, CFG)
    b = frame_wrench((0.1, -0.05), w, CFG)
    np.testing.assert_array_equal(a.force, b.force)


def test_rotor_thrust_range():
    assert rotor_thrust(1000.0, CFG) == pytest.approx(10.0)
    with pytest.raises(OutOfRange):
        rotor_thrust(-1.0, CFG)
    with pytest.raises(OutOfRange):
        rotor_thrust(CFG.omega_max + 1.0, CFG)
    with pytest.raises(OutOfRange):
        frame_force((0.0, 0.0), [0.0, 0.0, 2000.0], CFG)
    with pytest.raises(ValueError):
        frame_force((0.0, 0.0), [0.0, 0.0], CFG)


def test_rotor_positions_read_only():
    with pytest.raises(ValueError):
        CFG.rotor_positions("top")[0, 0] = 1.0


def test_config_reports_every_violation():
    with pytest.raises(ConfigError) as exc:
        AirframeConfig(mass=-1.0, arm_length=0.0, inertia_body=(1.0, -1.0, 1.0))
    text = " ".join(exc.value.errors)
    assert len(exc.value.errors) == 3
    for name in ("mass", "arm_length", "inertia_body"):
        assert name in text


def test_from_dict_round_trip():
    d = CFG.to_dict()
    assert d["tilt_limit_deg"] == pytest.approx(20.0)
    assert AirframeConfig.from_dict(json.loads(json.dumps(d))) == CFG


def test_from_dict_rejects_bad_input():
    with pytest.raises(ConfigError) as exc:
        AirframeConfig.from_dict({"mass": "heavy", "wingspan": 2.0})
    errs = exc.value.errors
    assert any("wingspan" in e for e in errs)
    assert any("inertia_body" in e and "missing" in e for e in errs)
    assert any("mass" in e for e in errs)
    assert all(e.startswith("airframe: ") for e in errs)


def test_from_dict_negative_mass_names_field():
    d = CFG.to_dict()
    d["mass"] = -0.8
    with pytest.raises(ConfigError, match="mass"):
        AirframeConfig.from_dict(d)


def test_hover_speed_beyond_motor_limit_warns():
    cfg = AirframeConfig(mass=20.0)
    assert any("omega_max" in w for w in cfg.warnings())
