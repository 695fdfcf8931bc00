"""Hierarchical cascaded-PID controller and per-frame thrust allocation.

Signal flow for one inner tick::

    setpoint --(position/attitude PID, outer rate)--> velocity / body-rate commands
             --(velocity/body-rate PID)-------------> acceleration commands
             --(reference mixing)-------------------> top/bottom tilt references
             --(frame attitude/rate PID)------------> frame angular-acceleration channels
             --(allocation matrices)----------------> PWM u1..u6 --> rotor speeds

Common-mode tilt of both frames translates the vehicle; differential tilt
turns the two thrust vectors into a couple about the CoM. Yaw comes from
the top/bottom drag-torque difference.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .airframe import AirframeConfig, ConfigError
from .geometry import angle_error

# Allocation matrices: columns are (z_acc, frame pitch, frame roll, yaw)
ALLOC_TOP = np.array([
    [1.0, -0.5, 1.0, -1.0],
    [1.0, 1.0, 0.0, -1.0],
    [1.0, -0.5, -1.0, -1.0],
])
ALLOC_BOTTOM = np.array([
    [1.0, -1.0, 0.0, 1.0],
    [1.0, 0.5, 1.0, 1.0],
    [1.0, 0.5, -1.0, 1.0],
])
_TOP_ROWS = tuple(tuple(float(v) for v in row) for row in ALLOC_TOP)
_BOT_ROWS = tuple(tuple(float(v) for v in row) for row in ALLOC_BOTTOM)

POSITION_CHANNELS = ("x", "y", "z")
VELOCITY_CHANNELS = ("vx", "vy", "vz")
ATTITUDE_CHANNELS = ("roll", "pitch", "yaw")
RATE_CHANNELS = ("roll_rate", "pitch_rate", "yaw_rate")
FRAME_CHANNELS = ("frame_roll", "frame_pitch", "frame_roll_rate", "frame_pitch_rate")
ALL_CHANNELS = (POSITION_CHANNELS + VELOCITY_CHANNELS + ATTITUDE_CHANNELS
                + RATE_CHANNELS + FRAME_CHANNELS)

DIAGNOSTIC_CHANNELS = (
    "vel_cmd_x", "vel_cmd_y", "vel_cmd_z",
    "rate_cmd_roll", "rate_cmd_pitch", "rate_cmd_yaw",
    "acc_cmd_x", "acc_cmd_y", "acc_cmd_z",
    "ang_acc_cmd_roll", "ang_acc_cmd_pitch", "ang_acc_cmd_yaw",
    "top_roll_ref", "top_pitch_ref", "bottom_roll_ref", "bottom_pitch_ref",
    "top_roll_rate_cmd", "top_pitch_rate_cmd", "bottom_roll_rate_cmd", "bottom_pitch_rate_cmd",
    "top_roll_acc_cmd", "top_pitch_acc_cmd", "bottom_roll_acc_cmd", "bottom_pitch_acc_cmd",
    "saturated", "hold",
)


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    integral_limit: float = 1.0
    output_limit: float = 1.0e9

    def violations(self, name: str = "") -> list[str]:
        errs = []
        for key in ("kp", "ki", "kd"):
            v = getattr(self, key)
            if not (math.isfinite(v) and v >= 0):
                errs.append(f"{name}.{key} must be >= 0 (got {v!r})")
        for key in ("integral_limit", "output_limit"):
            v = getattr(self, key)
            if not v > 0:
                errs.append(f"{name}.{key} must be > 0 (got {v!r})")
        return errs


class PidState(NamedTuple):
    integral: float = 0.0
    prev_error: Optional[float] = None
    prev_time: float = 0.0


def pid_step(gains: PidGains, state: PidState, target: float, measured: float,
             target_rate: Optional[float], measured_rate: Optional[float], dt: float,
             angular: bool = False) -> tuple[float, PidState]:
    """One PID update.

    The derivative term uses ``target_rate - measured_rate`` when both are
    given, otherwise a backward difference of the error. The integral is
    clamped to ``integral_limit`` and frozen while the output is saturated
    in the direction of the error.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    e = angle_error(target, measured) if angular else target - measured
    if target_rate is not None and measured_rate is not None:
        de = target_rate - measured_rate
    elif state.prev_error is None:
        de = 0.0
    else:
        de = (e - state.prev_error) / dt
    lim = gains.integral_limit
    integral = min(lim, max(-lim, state.integral + e * dt))
    unsat = gains.kp * e + gains.kd * de + gains.ki * integral
    out_lim = gains.output_limit
    out = min(out_lim, max(-out_lim, unsat))
    if out != unsat and (unsat - out) * e > 0:
        integral = state.integral
        out = min(out_lim, max(-out_lim, gains.kp * e + gains.kd * de + gains.ki * integral))
    return out, PidState(integral, e, state.prev_time + dt)


@dataclass(frozen=True)
class NoiseConfig:
    """Standard deviations of additive Gaussian measurement noise."""

    position: float = 0.0
    velocity: float = 0.0
    attitude: float = 0.0
    body_rate: float = 0.0
    tilt: float = 0.0
    tilt_rate: float = 0.0

    @property
    def enabled(self) -> bool:
        return any(v > 0 for v in (self.position, self.velocity, self.attitude,
                                   self.body_rate, self.tilt, self.tilt_rate))


@dataclass(frozen=True)
class ControllerConfig:
    gains: dict = field(default_factory=dict)
    rate_inner_hz: float = 1000.0
    rate_outer_hz: float = 250.0
    k_output: float = 1.0
    k_trans: float = 1.0 / 9.8
    k_att: tuple = (0.0153, 0.0147)
    tilt_ref_limit: Optional[float] = None
    accel_limit: float = 4.0
    # slew limit on the body-frame lateral acceleration command (common-mode tilt)
    jerk_limit: float = 15.0
    # cancel the predicted joint-damping torque on the body in the roll/pitch commands
    damping_compensation: bool = True
    # per-channel pre-scaling in front of the allocation matrices; None = derive from airframe
    channel_scale: Optional[dict] = None
    disturbance_feedforward: bool = False
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self):
        merged = dict(DEFAULT_GAINS)
        merged.update(self.gains)
        object.__setattr__(self, "gains", merged)
        if isinstance(self.k_att, (int, float)):
            object.__setattr__(self, "k_att", (float(self.k_att), float(self.k_att)))
        else:
            object.__setattr__(self, "k_att", tuple(float(v) for v in self.k_att))

    def violations(self) -> list[str]:
        errs = []
        for name in ALL_CHANNELS:
            errs += self.gains[name].violations(f"controller.gains.{name}")
        unknown = set(self.gains) - set(ALL_CHANNELS)
        errs += [f"controller.gains: unknown channel {n!r}" for n in sorted(unknown)]
        for name in ("rate_inner_hz", "rate_outer_hz", "k_output", "accel_limit", "jerk_limit"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                errs.append(f"controller.{name} must be positive (got {v!r})")
        if not errs and self.rate_outer_hz > self.rate_inner_hz:
            errs.append("controller.rate_outer_hz must not exceed rate_inner_hz")
        if not (math.isfinite(self.k_trans) and self.k_trans > 0):
            errs.append(f"controller.k_trans must be positive (got {self.k_trans!r})")
        if len(self.k_att) != 2 or not all(v > 0 for v in self.k_att):
            errs.append(f"controller.k_att must be positive (got {self.k_att!r})")
        if self.tilt_ref_limit is not None and not 0 < self.tilt_ref_limit < math.pi / 2:
            errs.append("controller.tilt_ref_limit_deg must be in (0, 90)")
        if self.channel_scale is not None:
            for key in ("z", "pitch", "roll", "yaw"):
                v = self.channel_scale.get(key)
                if not (isinstance(v, (int, float)) and v > 0):
                    errs.append(f"controller.channel_scale.{key} must be positive (got {v!r})")
        return errs

    def outer_every(self) -> int:
        return max(1, round(self.rate_inner_hz / self.rate_outer_hz))

    def to_dict(self) -> dict:
        d = {
            "rate_inner_hz": self.rate_inner_hz,
            "rate_outer_hz": self.rate_outer_hz,
            "k_output": self.k_output,
            "k_trans": self.k_trans,
            "k_att": list(self.k_att),
            "accel_limit": self.accel_limit,
            "jerk_limit": self.jerk_limit,
            "damping_compensation": self.damping_compensation,
            "disturbance_feedforward": self.disturbance_feedforward,
            "gains": {k: vars(v).copy() for k, v in self.gains.items()},
            "noise": vars(self.noise).copy(),
        }
        if self.tilt_ref_limit is not None:
            d["tilt_ref_limit_deg"] = math.degrees(self.tilt_ref_limit)
        if self.channel_scale is not None:
            d["channel_scale"] = dict(self.channel_scale)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ControllerConfig":
        errs, kwargs = [], {}
        simple = ("rate_inner_hz", "rate_outer_hz", "k_output", "k_trans", "k_att",
                  "accel_limit", "jerk_limit", "damping_compensation",
                  "disturbance_feedforward", "channel_scale")
        for key, value in data.items():
            if key in simple:
                kwargs[key] = value
            elif key == "tilt_ref_limit_deg":
                kwargs["tilt_ref_limit"] = math.radians(value) if _num(value) else value
            elif key == "gains":
                gains = {}
                for ch, g in value.items():
                    if not isinstance(g, dict):
                        errs.append(f"controller.gains.{ch} must be an object")
                        continue
                    bad = set(g) - {"kp", "ki", "kd", "integral_limit", "output_limit"}
                    if bad:
                        errs.append(f"controller.gains.{ch}: unknown keys {sorted(bad)}")
                        continue
                    if not all(_num(v) for v in g.values()):
                        errs.append(f"controller.gains.{ch}: values must be numbers")
                        continue
                    base = DEFAULT_GAINS.get(ch, PidGains())
                    gains[ch] = replace(base, **{k: float(v) for k, v in g.items()})
                kwargs["gains"] = gains
            elif key == "noise":
                try:
                    kwargs["noise"] = NoiseConfig(**value)
                except TypeError as exc:
                    errs.append(f"controller.noise: {exc}")
            else:
                errs.append(f"controller: unknown field {key!r}")
        for key in ("rate_inner_hz", "rate_outer_hz", "k_output", "k_trans", "accel_limit",
                    "jerk_limit"):
            if key in kwargs and not _num(kwargs[key]):
                errs.append(f"controller.{key} must be a number (got {kwargs[key]!r})")
        if "tilt_ref_limit" in kwargs and not _num(kwargs["tilt_ref_limit"]):
            errs.append("controller.tilt_ref_limit_deg must be a number")
        if errs:
            raise ConfigError(errs)
        cfg = cls(**kwargs)
        errs = cfg.violations()
        if errs:
            raise ConfigError(errs)
        return cfg

    @classmethod
    def from_json(cls, path) -> "ControllerConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _g(kp, ki=0.0, kd=0.0, ilim=1.0, olim=1.0e9):
    return PidGains(kp, ki, kd, ilim, olim)


# Tuned on the circle scenario: frame loops first, then body rate and
# velocity loops, then position/attitude, keeping >= 3x bandwidth between stages.
DEFAULT_GAINS = {
    "x": _g(1.5, 0.0, 0.0, 1.0, 2.0),
    "y": _g(1.5, 0.0, 0.0, 1.0, 2.0),
    "z": _g(2.0, 0.0, 0.0, 1.0, 1.5),
    # P-only velocity loops: a PI loop around an integrator always overshoots
    "vx": _g(4.0, 0.0, 0.0, 1.0, 4.0),
    "vy": _g(4.0, 0.0, 0.0, 1.0, 4.0),
    "vz": _g(5.0, 0.0, 0.0, 2.0, 4.0),
    "roll": _g(4.0, 0.5, 0.0, 0.2, 3.0),
    "pitch": _g(4.0, 0.5, 0.0, 0.2, 3.0),
    "yaw": _g(3.0, 0.0, 0.0, 0.5, 2.0),
    "roll_rate": _g(12.0, 4.0, 0.0, 1.0, 30.0),
    "pitch_rate": _g(12.0, 4.0, 0.0, 1.0, 30.0),
    "yaw_rate": _g(10.0, 3.0, 0.0, 1.0, 20.0),
    "frame_roll": _g(30.0, 5.0, 0.0, 0.1, 10.0),
    "frame_pitch": _g(30.0, 5.0, 0.0, 0.1, 10.0),
    # output capped just under the differential authority left at hover trim,
    # so frame commands do not clip individual PWM channels
    "frame_roll_rate": _g(120.0, 400.0, 0.0, 0.5, 140.0),
    "frame_pitch_rate": _g(120.0, 400.0, 0.0, 0.5, 140.0),
}


@dataclass(frozen=True)
class Setpoint:
    position: tuple = (0.0, 0.0, 0.0)
    attitude: tuple = (0.0, 0.0, 0.0)
    velocity: Optional[tuple] = None
    acceleration: Optional[tuple] = None


class ActuatorOutputs(NamedTuple):
    u: tuple
    saturated: bool
    raw: tuple


class CommandVector(NamedTuple):
    z_acc: float
    pitch: float
    roll: float
    yaw_acc: float


@dataclass(frozen=True)
class AllocationScale:
    """PWM per unit of each allocation channel, plus the hover trim."""

    z: float
    pitch: float
    roll: float
    yaw: float
    u_hover: float

    @classmethod
    def from_airframe(cls, airframe: AirframeConfig, overrides: Optional[dict] = None):
        t_max = airframe.c_lift * airframe.omega_max ** 2
        d = airframe.arm_length
        jf_phi, jf_theta = airframe.inertia_frame
        scale = {
            # six rotors share the collective
            "z": airframe.mass / (6.0 * t_max),
            # lever sums of the pitch/roll columns: 1.5 d and sqrt(3) d
            "pitch": jf_theta / (1.5 * d * t_max),
            "roll": jf_phi / (math.sqrt(3.0) * d * t_max),
            "yaw": airframe.inertia_body[2] / (6.0 * airframe.c_drag * airframe.omega_max ** 2),
        }
        if overrides:
            scale.update(overrides)
        u_hover = airframe.mass * airframe.gravity / (6.0 * t_max)
        return cls(u_hover=u_hover, **scale)


def hover_trim(airframe: AirframeConfig) -> float:
    """PWM at which six equal rotors carry the weight."""
    return airframe.mass * airframe.gravity / (6.0 * airframe.c_lift * airframe.omega_max ** 2)


def allocate(top: tuple, bottom: tuple, z_acc: float, yaw_acc: float, k: float,
             u_hover: float = 0.0) -> ActuatorOutputs:
    """Map channel commands to six PWM outputs.

    ``top`` and ``bottom`` are ``(pitch, roll)`` frame channels. Each frame
    uses its allocation matrix on ``[z_acc, pitch, roll, yaw_acc]``; the
    result is offset by the hover trim and clamped to [0, 1].
    """
    raw = []
    for rows, (pitch, roll) in ((_TOP_ROWS, top), (_BOT_ROWS, bottom)):
        for a, b, c, d in rows:
            raw.append(u_hover + k * (a * z_acc + b * pitch + c * roll + d * yaw_acc))
    u = tuple(min(1.0, max(0.0, v)) for v in raw)
    return ActuatorOutputs(u, u != tuple(raw), tuple(raw))


def pwm_to_speed(u: float, airframe: AirframeConfig) -> float:
    """Rotor speed for PWM ``u``; thrust is linear in ``u``."""
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"PWM {u!r} outside [0, 1]")
    return airframe.omega_max * math.sqrt(u)


def speed_to_pwm(omega: float, airframe: AirframeConfig) -> float:
    return (omega / airframe.omega_max) ** 2


def frame_reference_mix(x_acc: float, y_acc: float, roll_acc: float, pitch_acc: float,
                        k_trans: float = 1.0, k_att=(1.0, 1.0),
                        limit: float = math.inf) -> tuple:
    """Tilt references ``(phi_t, theta_t, phi_b, theta_b)`` from body commands.

    Body-frame lateral accelerations drive both frames the same way; body
    angular-acceleration commands drive them in opposite directions. A
    positive roll tilt points thrust toward -y, hence the sign on ``y_acc``.
    Each frame reference stays within ``limit``; when the sum would exceed
    it, the common-mode (translation) part is reduced first.
    """
    common = [-k_trans * y_acc, k_trans * x_acc]
    diff = [k_att[0] * roll_acc, k_att[1] * pitch_acc]
    for i in range(2):
        # attitude keeps its authority: the common-mode part gives way first
        d = min(limit, max(-limit, diff[i]))
        room = limit - abs(d)
        diff[i] = d
        common[i] = min(room, max(-room, common[i]))
    return (diff[0] + common[0], diff[1] + common[1],
            -diff[0] + common[0], -diff[1] + common[1])


@dataclass(frozen=True)
class ControllerMemory:
    pid: dict = field(default_factory=dict)
    tick: int = 0
    outer: tuple = (0.0,) * 6
    lateral: Optional[tuple] = None
    last_output: Optional[ActuatorOutputs] = None
    last_diagnostics: Optional[dict] = None
    hold: bool = False


def _pid(memory_pid: dict, new_pid: dict, cfg: ControllerConfig, key: str, gain_key: str,
         target, measured, target_rate, measured_rate, dt, angular=False) -> float:
    out, st = pid_step(cfg.gains[gain_key], memory_pid.get(key, _FRESH), target, measured,
                       target_rate, measured_rate, dt, angular)
    new_pid[key] = st
    return out


_FRESH = PidState()


def body_outer_loop(setpoint: Setpoint, state, cfg: ControllerConfig, pid: dict, dt: float):
    """Position -> velocity and attitude -> body-rate commands.

    Returns ``(velocity_cmd, rate_cmd, new_pid)``; ``pid`` is not mutated.
    The setpoint's feedforward velocity is added to the velocity command.
    """
    x = _as_list(state)
    new = dict(pid)
    ff = setpoint.velocity or (0.0, 0.0, 0.0)
    vel_cmd = tuple(
        _pid(pid, new, cfg, ch, ch, setpoint.position[i], x[i], ff[i], x[3 + i], dt) + ff[i]
        for i, ch in enumerate(POSITION_CHANNELS)
    )
    euler_rates = _euler_rates(x)
    rate_cmd = tuple(
        _pid(pid, new, cfg, ch, ch, setpoint.attitude[i], x[6 + i], 0.0, euler_rates[i], dt,
             angular=True)
        for i, ch in enumerate(ATTITUDE_CHANNELS)
    )
    return vel_cmd, rate_cmd, new


def body_inner_loop(velocity_cmd, rate_cmd, state, cfg: ControllerConfig, pid: dict, dt: float,
                    accel_ff=None):
    """Velocity -> world acceleration and body-rate -> angular-acceleration commands.

    Returns ``(accel_cmd, ang_accel_cmd, new_pid)``.
    """
    x = _as_list(state)
    new = dict(pid)
    ff = accel_ff or (0.0, 0.0, 0.0)
    lim = cfg.accel_limit
    accel = tuple(
        min(lim, max(-lim, _pid(pid, new, cfg, ch, ch, velocity_cmd[i], x[3 + i], None, None, dt)
                     + ff[i]))
        for i, ch in enumerate(VELOCITY_CHANNELS)
    )
    ang = tuple(
        _pid(pid, new, cfg, ch, ch, rate_cmd[i], x[9 + i], None, None, dt)
        for i, ch in enumerate(RATE_CHANNELS)
    )
    return accel, ang, new


def frame_loop(references, state, cfg: ControllerConfig, pid: dict, dt: float):
    """Frame attitude -> tilt-rate -> angular-acceleration channels.

    ``references`` is ``(phi_t, theta_t, phi_b, theta_b)``. Returns
    ``(rate_cmds, channels, new_pid)`` with both in that same order.
    """
    x = _as_list(state)
    new = dict(pid)
    measured = (x[12], x[13], x[16], x[17])
    rates = (x[14], x[15], x[18], x[19])
    names = ("top_roll", "top_pitch", "bottom_roll", "bottom_pitch")
    rate_cmd, acc_cmd = [], []
    for i, name in enumerate(names):
        axis = "frame_roll" if name.endswith("roll") else "frame_pitch"
        r = _pid(pid, new, cfg, name, axis, references[i], measured[i], 0.0, rates[i], dt)
        rate_cmd.append(r)
        acc_cmd.append(_pid(pid, new, cfg, name + "_rate", axis + "_rate", r, rates[i],
                            None, None, dt))
    return tuple(rate_cmd), tuple(acc_cmd), new


def world_to_tilt_accels(accel_world, attitude, gravity: float):
    """Body-frame lateral accelerations and collective for a world command.

    The commanded specific force ``a + g e_z`` is rotated into body axes;
    its lateral components are rescaled to what they would be under level
    thrust. Returns ``(x_acc, y_acc, z_acc)`` where ``z_acc`` is the
    collective above hover.
    """
    fx, fy, fz = accel_world[0], accel_world[1], accel_world[2] + gravity
    phi, theta, psi = attitude
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cs, ss = math.cos(psi), math.sin(psi)
    # R^T f with R the Z-Y-X body-to-world rotation
    bx = cs * ct * fx + ss * ct * fy - st * fz
    by = (cs * st * sf - ss * cf) * fx + (ss * st * sf + cs * cf) * fy + ct * sf * fz
    bz = (cs * st * cf + ss * sf) * fx + (ss * st * cf - cs * sf) * fy + ct * cf * fz
    bz = max(bz, 0.1 * gravity)
    norm = math.sqrt(fx * fx + fy * fy + fz * fz)
    return gravity * bx / bz, gravity * by / bz, norm - gravity


class Controller:
    """Binds configs and precomputed scales; ``tick`` is a pure function of its inputs."""

    def __init__(self, airframe: AirframeConfig, config: ControllerConfig):
        errs = config.violations()
        if errs:
            raise ConfigError(errs)
        self.airframe = airframe
        self.config = config
        self.scale = AllocationScale.from_airframe(airframe, config.channel_scale)
        self.tilt_ref_limit = min(airframe.tilt_limit, config.tilt_ref_limit or airframe.tilt_limit)
        self.outer_every = config.outer_every()
        self.dt_inner = 1.0 / config.rate_inner_hz

    def initial_memory(self) -> ControllerMemory:
        return ControllerMemory()

    def hover_output(self) -> ActuatorOutputs:
        return allocate((0.0, 0.0), (0.0, 0.0), 0.0, 0.0, self.config.k_output, self.scale.u_hover)

    def tick(self, setpoint: Setpoint, measured, memory: ControllerMemory, dt: Optional[float] = None):
        return controller_tick(self, setpoint, measured, memory, dt or self.dt_inner)


def _as_list(state) -> list:
    if isinstance(state, list):
        return state
    if hasattr(state, "to_vector"):
        return state.to_vector().tolist()
    return [float(v) for v in state]


def _euler_rates(x):
    phi, theta = x[6], x[7]
    p, q, r = x[9], x[10], x[11]
    sf, cf = math.sin(phi), math.cos(phi)
    ct = math.cos(theta)
    tt = math.tan(theta)
    return (p + (sf * q + cf * r) * tt, cf * q - sf * r, (sf * q + cf * r) / ct)


def _frame_feedforward(x, ctrl: Controller) -> tuple:
    """Angular-acceleration offsets cancelling the tilted drag couple on each frame."""
    af = ctrl.airframe
    jf_phi, jf_theta = af.inertia_frame
    couple = af.c_drag * af.omega_max ** 2 * 3.0 * ctrl.scale.u_hover
    out = []
    for spin, phi, theta in ((-1.0, x[12], x[13]), (1.0, x[16], x[17])):
        lz = spin * couple
        mx = math.sin(theta) * lz
        my = -math.cos(theta) * math.sin(phi) * lz
        out.append((-mx / jf_phi, -my / jf_theta))
    return out[0][0], out[0][1], out[1][0], out[1][1]


def controller_tick(ctrl: Controller, setpoint: Setpoint, measured, memory: ControllerMemory,
                    dt: float):
    """Run one inner-rate controller update.

    Returns ``(ActuatorOutputs, new_memory, diagnostics)``. Outer loops run
    every ``outer_every`` ticks and are held in between. A non-finite
    measurement freezes the previous output and sets the ``hold`` flag.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    cfg = ctrl.config
    x = _as_list(measured)
    if not all(map(math.isfinite, x)):
        last = memory.last_output or ctrl.hover_output()
        diag = dict(memory.last_diagnostics or dict.fromkeys(DIAGNOSTIC_CHANNELS, 0.0))
        diag["hold"] = 1.0
        return last, replace(memory, tick=memory.tick + 1, hold=True), diag

    pid = memory.pid
    if memory.tick % ctrl.outer_every == 0:
        vel_cmd, rate_cmd, pid = body_outer_loop(setpoint, x, cfg, pid, dt * ctrl.outer_every)
        outer = vel_cmd + rate_cmd
    else:
        outer = memory.outer
        vel_cmd, rate_cmd = outer[:3], outer[3:]

    accel, ang, pid = body_inner_loop(vel_cmd, rate_cmd, x, cfg, pid, dt, setpoint.acceleration)
    if cfg.damping_compensation:
        af = ctrl.airframe
        c = af.frame_damping
        ang = (ang[0] - c * (x[14] + x[18]) / af.inertia_body[0],
               ang[1] - c * (x[15] + x[19]) / af.inertia_body[1], ang[2])
    g = ctrl.airframe.gravity
    x_acc, y_acc, z_acc = world_to_tilt_accels(accel, (x[6], x[7], x[8]), g)
    if memory.lateral is not None:
        step_max = cfg.jerk_limit * dt
        px, py = memory.lateral
        x_acc = min(px + step_max, max(px - step_max, x_acc))
        y_acc = min(py + step_max, max(py - step_max, y_acc))
    refs = frame_reference_mix(x_acc, y_acc, ang[0], ang[1], cfg.k_trans, cfg.k_att,
                               ctrl.tilt_ref_limit)
    frame_rates, frame_acc, pid = frame_loop(refs, x, cfg, pid, dt)
    if cfg.disturbance_feedforward:
        ff = _frame_feedforward(x, ctrl)
        frame_acc = tuple(a + b for a, b in zip(frame_acc, ff))

    s = ctrl.scale
    top = (s.pitch * frame_acc[1], s.roll * frame_acc[0])
    bottom = (s.pitch * frame_acc[3], s.roll * frame_acc[2])
    out = allocate(top, bottom, s.z * z_acc, s.yaw * ang[2], cfg.k_output, s.u_hover)

    diag = {
        "vel_cmd_x": vel_cmd[0], "vel_cmd_y": vel_cmd[1], "vel_cmd_z": vel_cmd[2],
        "rate_cmd_roll": rate_cmd[0], "rate_cmd_pitch": rate_cmd[1], "rate_cmd_yaw": rate_cmd[2],
        "acc_cmd_x": accel[0], "acc_cmd_y": accel[1], "acc_cmd_z": accel[2],
        "ang_acc_cmd_roll": ang[0], "ang_acc_cmd_pitch": ang[1], "ang_acc_cmd_yaw": ang[2],
        "top_roll_ref": refs[0], "top_pitch_ref": refs[1],
        "bottom_roll_ref": refs[2], "bottom_pitch_ref": refs[3],
        "top_roll_rate_cmd": frame_rates[0], "top_pitch_rate_cmd": frame_rates[1],
        "bottom_roll_rate_cmd": frame_rates[2], "bottom_pitch_rate_cmd": frame_rates[3],
        "top_roll_acc_cmd": frame_acc[0], "top_pitch_acc_cmd": frame_acc[1],
        "bottom_roll_acc_cmd": frame_acc[2], "bottom_pitch_acc_cmd": frame_acc[3],
        "saturated": 1.0 if out.saturated else 0.0,
        "hold": 0.0,
    }
    memory = ControllerMemory(pid=pid, tick=memory.tick + 1, outer=outer, lateral=(x_acc, y_acc),
                              last_output=out, last_diagnostics=diag, hold=False)
    return out, memory, diag


def rotor_speeds(outputs: ActuatorOutputs, airframe: AirframeConfig) -> tuple:
    return tuple(pwm_to_speed(u, airframe) for u in outputs.u)


def hover_command_jacobian(airframe: AirframeConfig, config: ControllerConfig,
                           h: float = 1e-6) -> np.ndarray:
    """Jacobian from the six body commands to the normalized body wrench at hover.

    Commands are ``(x_acc, y_acc, z_acc, roll_acc, pitch_acc, yaw_acc)``.
    The wrench is ``(world force / m, body moment / J)`` evaluated
    quasi-statically: frames sit at their mixed references and rotors at
    the allocated speeds. Full actuation means this 6x6 map has rank 6.
    """
    from .airframe import body_force_world, body_moment, frame_wrench
    from .geometry import EulerAngles

    scale = AllocationScale.from_airframe(airframe, config.channel_scale)
    J = np.asarray(airframe.inertia_body)

    def wrench(cmd):
        xa, ya, za, ra, pa, yaw = cmd
        refs = frame_reference_mix(xa, ya, ra, pa, config.k_trans, config.k_att)
        out = allocate((0.0, 0.0), (0.0, 0.0), scale.z * za, scale.yaw * yaw,
                       config.k_output, scale.u_hover)
        w = [pwm_to_speed(u, airframe) for u in out.u]
        top = frame_wrench((refs[0], refs[1]), w[:3], airframe, "top")
        bot = frame_wrench((refs[2], refs[3]), w[3:], airframe, "bottom")
        f = body_force_world(EulerAngles(), top.force, bot.force, airframe) / airframe.mass
        m = body_moment(top, bot, airframe) / J
        return np.concatenate([f, m])

    cols = []
    for i in range(6):
        e = np.zeros(6)
        e[i] = h
        cols.append((wrench(e) - wrench(-e)) / (2 * h))
    return np.column_stack(cols)
