"""Continuous-time vehicle model and fixed-step RK4 integration.

State vector layout (20 entries)::

    0:3   position, world [m]
    3:6   velocity, world [m/s]
    6:9   body Euler angles phi, theta, psi [rad]
    9:12  body rates, body axes [rad/s]
    12:14 top frame tilt phi_t, theta_t     14:16 its rates
    16:18 bottom frame tilt phi_b, theta_b  18:20 its rates

Each passive frame is modelled as a two-axis rotor on its universal joint
with diagonal inertia and viscous joint damping, driven by the x/y part of
its rotor moment. Tilt angles are relative to the body, so body angular
acceleration enters each frame equation with opposite sign. Frames are
massless in translation. The joint stops are inelastic: a frame pressed
against its stop moves with the body and hands its moment to the body.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .airframe import AirframeConfig, OutOfRange, frame_wrench_components
from .geometry import GIMBAL_MARGIN, EulerAngles, GimbalSingularity, wrap_angle

STATE_SIZE = 20
POS, VEL, ATT, RATE = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12)
TOP_TILT, TOP_RATE = slice(12, 14), slice(14, 16)
BOT_TILT, BOT_RATE = slice(16, 18), slice(18, 20)

MAX_DT = 0.01


class NonFiniteState(FloatingPointError):
    """The integrated state left the finite domain."""


def _vec(v, n=3) -> np.ndarray:
    a = np.array(v, dtype=float).reshape(n)
    return a


@dataclass
class VehicleState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    attitude: EulerAngles = field(default_factory=EulerAngles)
    body_rates: np.ndarray = field(default_factory=lambda: np.zeros(3))
    top_tilt: np.ndarray = field(default_factory=lambda: np.zeros(2))
    top_tilt_rates: np.ndarray = field(default_factory=lambda: np.zeros(2))
    bottom_tilt: np.ndarray = field(default_factory=lambda: np.zeros(2))
    bottom_tilt_rates: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.position = _vec(self.position)
        self.velocity = _vec(self.velocity)
        if not isinstance(self.attitude, EulerAngles):
            self.attitude = EulerAngles.from_array(self.attitude)
        self.body_rates = _vec(self.body_rates)
        self.top_tilt = _vec(self.top_tilt, 2)
        self.top_tilt_rates = _vec(self.top_tilt_rates, 2)
        self.bottom_tilt = _vec(self.bottom_tilt, 2)
        self.bottom_tilt_rates = _vec(self.bottom_tilt_rates, 2)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.position, self.velocity, self.attitude.as_array(), self.body_rates,
            self.top_tilt, self.top_tilt_rates, self.bottom_tilt, self.bottom_tilt_rates,
        ])

    @classmethod
    def from_vector(cls, x) -> "VehicleState":
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"non-finite state vector {x}")
        return cls(x[POS], x[VEL], EulerAngles.from_array(x[ATT]), x[RATE],
                   x[TOP_TILT], x[TOP_RATE], x[BOT_TILT], x[BOT_RATE])

    def is_within_stops(self, config: AirframeConfig, tol: float = 1e-12) -> bool:
        lim = config.tilt_limit + tol
        return bool(np.all(np.abs(self.top_tilt) <= lim) and np.all(np.abs(self.bottom_tilt) <= lim))


@dataclass
class StateDerivative:
    position: np.ndarray
    velocity: np.ndarray
    attitude: np.ndarray
    body_rates: np.ndarray
    top_tilt: np.ndarray
    top_tilt_rates: np.ndarray
    bottom_tilt: np.ndarray
    bottom_tilt_rates: np.ndarray

    @classmethod
    def from_vector(cls, dx) -> "StateDerivative":
        dx = np.asarray(dx, dtype=float)
        return cls(dx[POS], dx[VEL], dx[ATT], dx[RATE],
                   dx[TOP_TILT], dx[TOP_RATE], dx[BOT_TILT], dx[BOT_RATE])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.position, self.velocity, self.attitude, self.body_rates,
            self.top_tilt, self.top_tilt_rates, self.bottom_tilt, self.bottom_tilt_rates,
        ])


def hover_speeds(config: AirframeConfig) -> np.ndarray:
    return np.full(6, config.hover_speed)


def hover_state(position=(0.0, 0.0, 0.0), yaw: float = 0.0) -> VehicleState:
    return VehicleState(position=position, attitude=EulerAngles(0.0, 0.0, yaw))


def body_rotational_accel(body_rates, moment, config: AirframeConfig) -> np.ndarray:
    """Euler's rigid-body equation with diagonal inertia."""
    w = np.asarray(body_rates, dtype=float)
    J = np.asarray(config.inertia_body)
    return (np.asarray(moment, dtype=float) - np.cross(w, J * w)) / J


def body_translational_accel(world_force, config: AirframeConfig) -> np.ndarray:
    """World acceleration; ``world_force`` already includes gravity."""
    return np.asarray(world_force, dtype=float) / config.mass


def _stop_flags(tilt, limit):
    """Per-axis -1/0/+1 marking which stop (if any) the axis rests on."""
    tilt = np.asarray(tilt, dtype=float)
    return np.where(tilt >= limit, 1.0, np.where(tilt <= -limit, -1.0, 0.0))


def frame_tilt_accel(tilt, rates, moment_xy, body_coupling, config: AirframeConfig,
                     at_stop=None) -> np.ndarray:
    """Tilt acceleration of one frame relative to the body.

    Free motion is ``(moment - damping * rate) / J_frame + body_coupling``.
    Against a stop with the net push outward, the axis is held (zero).
    """
    tilt = np.asarray(tilt, dtype=float)
    rates = np.asarray(rates, dtype=float)
    J = np.asarray(config.inertia_frame)
    acc = (np.asarray(moment_xy, dtype=float) - config.frame_damping * rates) / J
    acc = acc + np.asarray(body_coupling, dtype=float)
    stop = _stop_flags(tilt, config.tilt_limit) if at_stop is None else at_stop
    return np.where(stop * acc > 0.0, 0.0, acc)


class _Constants:
    """Scalar copies of config values used on every RHS evaluation."""

    __slots__ = ("mass", "g", "jx", "jy", "jz", "ht", "hb", "jf_phi", "jf_theta",
                 "damping", "limit", "top", "bottom")

    def __init__(self, config: AirframeConfig):
        self.mass, self.g = config.mass, config.gravity
        self.jx, self.jy, self.jz = config.inertia_body
        self.ht, self.hb = config.h_top, config.h_bottom
        self.jf_phi, self.jf_theta = config.inertia_frame
        self.damping, self.limit = config.frame_damping, config.tilt_limit
        self.top, self.bottom = config.frame_params("top"), config.frame_params("bottom")


def _constants(config: AirframeConfig) -> _Constants:
    k = config._cache.get("dyn")
    if k is None:
        k = config._cache["dyn"] = _Constants(config)
    return k


def _stop(tilt: float, limit: float) -> float:
    if tilt >= limit:
        return 1.0
    if tilt <= -limit:
        return -1.0
    return 0.0


def _joint(tilt, rate, moment, k):
    """(stop flag, held?, torque handed to the body) for one joint axis."""
    damp = k.damping * rate
    stop = _stop(tilt, k.limit)
    held = stop * (moment - damp) > 0.0
    # damping reaction always; the whole frame moment once the stop carries it
    return stop, held, (moment - damp if held else damp)


def _tilt_rate(stop, rate):
    return 0.0 if stop * rate > 0.0 else rate


def _tilt_acc(stop, held, rate, moment, inertia, coupling, k):
    if held:
        return 0.0
    acc = (moment - k.damping * rate) / inertia + coupling
    return 0.0 if stop * acc > 0.0 else acc


def _rhs(x, w2, k: _Constants) -> list:
    (_, _, _, vx, vy, vz, phi, theta, psi, p, q, r,
     tp, tt, tp_r, tt_r, bp, bt, bp_r, bt_r) = x
    ftx, fty, ftz, mtx, mty, mtz = frame_wrench_components(tp, tt, w2[0], w2[1], w2[2], k.top)
    fbx, fby, fbz, mbx, mby, mbz = frame_wrench_components(bp, bt, w2[3], w2[4], w2[5], k.bottom)

    s_tp, h_tp, j_tp = _joint(tp, tp_r, mtx, k)
    s_tt, h_tt, j_tt = _joint(tt, tt_r, mty, k)
    s_bp, h_bp, j_bp = _joint(bp, bp_r, mbx, k)
    s_bt, h_bt, j_bt = _joint(bt, bt_r, mby, k)

    mx = -k.ht * fty + k.hb * fby + j_tp + j_bp
    my = k.ht * ftx - k.hb * fbx + j_tt + j_bt
    mz = mtz + mbz

    jx, jy, jz = k.jx, k.jy, k.jz
    p_dot = (mx - (jz - jy) * q * r) / jx
    q_dot = (my - (jx - jz) * r * p) / jy
    r_dot = (mz - (jy - jx) * p * q) / jz

    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cs, ss = math.cos(psi), math.sin(psi)
    if abs(theta) >= math.pi / 2 - GIMBAL_MARGIN:
        raise GimbalSingularity(f"pitch {theta:.6f} rad within gimbal margin")
    fx, fy, fz = ftx + fbx, fty + fby, ftz + fbz
    inv_m = 1.0 / k.mass
    ax = (cs * ct * fx + (cs * st * sf - ss * cf) * fy + (cs * st * cf + ss * sf) * fz) * inv_m
    ay = (ss * ct * fx + (ss * st * sf + cs * cf) * fy + (ss * st * cf - cs * sf) * fz) * inv_m
    az = (-st * fx + ct * sf * fy + ct * cf * fz) * inv_m - k.g

    tan_t = st / ct
    return [
        vx, vy, vz,
        ax, ay, az,
        p + (sf * q + cf * r) * tan_t,
        cf * q - sf * r,
        (sf * q + cf * r) / ct,
        p_dot, q_dot, r_dot,
        _tilt_rate(s_tp, tp_r), _tilt_rate(s_tt, tt_r),
        _tilt_acc(s_tp, h_tp, tp_r, mtx, k.jf_phi, -p_dot, k),
        _tilt_acc(s_tt, h_tt, tt_r, mty, k.jf_theta, -q_dot, k),
        _tilt_rate(s_bp, bp_r), _tilt_rate(s_bt, bt_r),
        _tilt_acc(s_bp, h_bp, bp_r, mbx, k.jf_phi, -p_dot, k),
        _tilt_acc(s_bt, h_bt, bt_r, mby, k.jf_theta, -q_dot, k),
    ]


def _squared(rotor_speeds, config: AirframeConfig) -> tuple:
    w = [float(v) for v in rotor_speeds]
    if len(w) != 6:
        raise ValueError(f"expected 6 rotor speeds, got {len(w)}")
    hi = config.omega_max
    for v in w:
        if not 0.0 <= v <= hi:
            raise OutOfRange(f"rotor speed {v!r} outside [0, {hi}]")
    return tuple(v * v for v in w)


def derivative_vector(x, rotor_speeds, config: AirframeConfig) -> np.ndarray:
    """Right-hand side of the full vehicle ODE on the flat state vector."""
    xs = [float(v) for v in x]
    return np.array(_rhs(xs, _squared(rotor_speeds, config), _constants(config)))


def state_derivative(state: VehicleState, rotor_speeds, config: AirframeConfig) -> StateDerivative:
    return StateDerivative.from_vector(derivative_vector(state.to_vector(), rotor_speeds, config))


def _apply_stops(x: list, limit: float) -> None:
    for ti, ri in ((12, 14), (13, 15), (16, 18), (17, 19)):
        t = x[ti]
        if t > limit:
            x[ti] = limit
            if x[ri] > 0.0:
                x[ri] = 0.0
        elif t < -limit:
            x[ti] = -limit
            if x[ri] < 0.0:
                x[ri] = 0.0


def rk4_step_list(x: list, w2: tuple, dt: float, k: _Constants) -> list:
    """One RK4 step on a plain list state; ``w2`` holds squared rotor speeds."""
    h = 0.5 * dt
    k1 = _rhs(x, w2, k)
    k2 = _rhs([a + h * b for a, b in zip(x, k1)], w2, k)
    k3 = _rhs([a + h * b for a, b in zip(x, k2)], w2, k)
    k4 = _rhs([a + dt * b for a, b in zip(x, k3)], w2, k)
    s = dt / 6.0
    out = [a + s * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
           for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4)]
    _apply_stops(out, k.limit)
    out[8] = wrap_angle(out[8])
    if not all(map(math.isfinite, out)):
        raise NonFiniteState("integration produced a non-finite state")
    return out


def rk4_step_vector(x, rotor_speeds, dt: float, config: AirframeConfig) -> np.ndarray:
    xs = [float(v) for v in x]
    return np.array(rk4_step_list(xs, _squared(rotor_speeds, config), dt, _constants(config)))


def step(state: VehicleState, rotor_speeds, dt: float, config: AirframeConfig) -> VehicleState:
    """Advance ``state`` by one RK4 step of length ``dt`` with speeds held."""
    if not 0.0 < dt <= MAX_DT:
        raise ValueError(f"dt must be in (0, {MAX_DT}], got {dt}")
    return VehicleState.from_vector(rk4_step_vector(state.to_vector(), rotor_speeds, dt, config))


def rotational_kinetic_energy(body_rates, config: AirframeConfig) -> float:
    w = np.asarray(body_rates, dtype=float)
    return 0.5 * float(w @ (np.asarray(config.inertia_body) * w))

