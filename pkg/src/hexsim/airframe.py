"""Static vehicle description and the rotor force/torque model.

Each of the two passive frames carries three rotors whose thrust acts
along the frame's own z axis. A frame's wrench is expressed in its mount
frame (parallel to the body axes, origin at the frame center); the body
only receives the frame forces plus the z component of each frame
moment, because the universal joint passes torque about z alone.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .geometry import EulerAngles, body_rotation

SQRT3_2 = math.sqrt(3.0) / 2.0

# reaction-torque sign: top rotors spin CCW (CW reaction), bottom the reverse
SPIN_TOP = -1.0
SPIN_BOTTOM = 1.0

FRAMES = ("top", "bottom")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every violation found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class OutOfRange(ValueError):
    pass


class FrameWrench(NamedTuple):
    force: np.ndarray
    moment: np.ndarray


@dataclass(frozen=True)
class AirframeConfig:
    mass: float = 0.8
    gravity: float = 9.8
    inertia_body: tuple = (0.0120, 0.0115, 0.0024)
    h_top: float = 0.10
    h_bottom: float = 0.10
    arm_length: float = 0.15
    c_lift: float = 1.0e-5
    c_drag: float = 2.0e-7
    tilt_limit: float = math.radians(20.0)
    omega_max: float = 1200.0
    inertia_frame: tuple = (0.002, 0.002)
    frame_damping: float = 0.01
    # the printed bottom layout puts rotor 6 at +d/2 in x, which leaves the frame unbalanced
    paper_literal_bottom_geometry: bool = False
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "inertia_body", tuple(float(v) for v in self.inertia_body))
        object.__setattr__(self, "inertia_frame", tuple(float(v) for v in self.inertia_frame))
        errors = self.violations()
        if errors:
            raise ConfigError(errors)

    def violations(self) -> list[str]:
        errs = []
        for name in ("mass", "gravity", "h_top", "h_bottom", "arm_length", "c_lift",
                     "c_drag", "tilt_limit", "omega_max"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                errs.append(f"{name} must be a positive finite number (got {v!r})")
        if self.tilt_limit >= math.pi / 2:
            errs.append("tilt_limit must be below 90 deg")
        if self.frame_damping < 0 or not math.isfinite(self.frame_damping):
            errs.append(f"frame_damping must be >= 0 (got {self.frame_damping!r})")
        if len(self.inertia_body) != 3 or not all(v > 0 for v in self.inertia_body):
            errs.append(f"inertia_body must be 3 positive diagonal entries (got {self.inertia_body!r})")
        if len(self.inertia_frame) != 2 or not all(v > 0 for v in self.inertia_frame):
            errs.append(f"inertia_frame must be 2 positive diagonal entries (got {self.inertia_frame!r})")
        return errs

    @property
    def inertia_matrix(self) -> np.ndarray:
        return np.diag(self.inertia_body)

    @property
    def rotor_positions_top(self) -> np.ndarray:
        d = self.arm_length
        return np.array([
            [d / 2, SQRT3_2 * d, 0.0],
            [-d, 0.0, 0.0],
            [d / 2, -SQRT3_2 * d, 0.0],
        ])

    @property
    def rotor_positions_bottom(self) -> np.ndarray:
        d = self.arm_length
        x6 = d / 2 if self.paper_literal_bottom_geometry else -d / 2
        return np.array([
            [d, 0.0, 0.0],
            [-d / 2, SQRT3_2 * d, 0.0],
            [x6, -SQRT3_2 * d, 0.0],
        ])

    def rotor_positions(self, which: str) -> np.ndarray:
        key = ("r", which)
        if key not in self._cache:
            if which == "top":
                r = self.rotor_positions_top
            elif which == "bottom":
                r = self.rotor_positions_bottom
            else:
                raise ValueError(f"unknown frame {which!r}")
            r.setflags(write=False)
            self._cache[key] = r
        return self._cache[key]

    def frame_params(self, which: str) -> tuple:
        """Flat per-frame constants for ``frame_wrench_components``."""
        key = ("p", which)
        if key not in self._cache:
            r = self.rotor_positions(which)
            spin = SPIN_TOP if which == "top" else SPIN_BOTTOM
            self._cache[key] = (
                float(r[0, 0]), float(r[0, 1]), float(r[1, 0]), float(r[1, 1]),
                float(r[2, 0]), float(r[2, 1]), self.c_lift, spin * self.c_drag,
            )
        return self._cache[key]

    @property
    def frame_offset_top(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.h_top])

    @property
    def frame_offset_bottom(self) -> np.ndarray:
        return np.array([0.0, 0.0, -self.h_bottom])

    def is_balanced(self, tol: float = 1e-12) -> bool:
        return all(
            np.allclose(self.rotor_positions(w).sum(axis=0), 0.0, atol=tol * self.arm_length)
            for w in FRAMES
        )

    @property
    def hover_speed(self) -> float:
        """Rotor speed at which six equal rotors carry the weight."""
        return math.sqrt(self.mass * self.gravity / (6.0 * self.c_lift))

    def warnings(self) -> list[str]:
        out = []
        if not self.is_balanced():
            out.append("bottom rotor positions do not sum to zero: frame is unbalanced at hover")
        if self.hover_speed > self.omega_max:
            out.append("hover speed exceeds omega_max: vehicle cannot lift its weight")
        return out

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            if f.name.startswith("_"):
                continue
            v = getattr(self, f.name)
            if f.name == "tilt_limit":
                d["tilt_limit_deg"] = math.degrees(v)
            else:
                d[f.name] = list(v) if isinstance(v, tuple) else v
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "AirframeConfig":
        """Build from flat SI keys; angles use ``<name>_deg`` keys."""
        known = {f.name for f in fields(cls) if not f.name.startswith("_")}
        kwargs, errs = {}, []
        for key, value in data.items():
            name = key[:-4] if key.endswith("_deg") else key
            if name not in known:
                errs.append(f"airframe: unknown field {key!r}")
                continue
            if key.endswith("_deg"):
                if not _is_number(value):
                    errs.append(f"airframe: {key} must be a number")
                    continue
                value = math.radians(value)
            kwargs[name] = value
        for required in ("mass", "inertia_body"):
            if required not in kwargs:
                errs.append(f"airframe: missing mandatory field {required!r}")
        for name, v in kwargs.items():
            if name in ("inertia_body", "inertia_frame"):
                if not (isinstance(v, list) and all(_is_number(x) for x in v)):
                    errs.append(f"airframe: {name} must be a list of numbers")
            elif name == "paper_literal_bottom_geometry":
                if not isinstance(v, bool):
                    errs.append(f"airframe: {name} must be a boolean")
            elif not _is_number(v):
                errs.append(f"airframe: {name} must be a number (got {v!r})")
        if errs:
            raise ConfigError(errs)
        try:
            return cls(**kwargs)
        except ConfigError as exc:
            raise ConfigError([f"airframe: {e}" for e in exc.errors]) from None

    @classmethod
    def from_json(cls, path) -> "AirframeConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def rotor_thrust(omega: float, config: AirframeConfig) -> float:
    if not 0.0 <= omega <= config.omega_max:
        raise OutOfRange(f"rotor speed {omega!r} outside [0, {config.omega_max}]")
    return config.c_lift * omega * omega


def _squared_speeds(speeds, config: AirframeConfig) -> np.ndarray:
    w = np.asarray(speeds, dtype=float)
    if w.shape != (3,):
        raise ValueError(f"expected 3 rotor speeds per frame, got shape {w.shape}")
    if np.any(w < 0.0) or np.any(w > config.omega_max) or not np.all(np.isfinite(w)):
        raise OutOfRange(f"rotor speeds {w} outside [0, {config.omega_max}]")
    return w * w


def frame_force(tilt, speeds, config: AirframeConfig, which: str = "top") -> np.ndarray:
    """Resultant rotor thrust on one frame, in its mount frame.

    ``tilt`` is ``(phi, theta)`` or an ``EulerAngles`` whose yaw is ignored.
    """
    return frame_wrench(tilt, speeds, config, which).force


def frame_moment(tilt, speeds, config: AirframeConfig, which: str = "top") -> np.ndarray:
    """Moment of one frame's rotors about the frame center, in its mount frame.

    Thrust lever arms plus the rotor drag couples, both rotated out of the
    tilted frame.
    """
    return frame_wrench(tilt, speeds, config, which).moment


def frame_wrench(tilt, speeds, config: AirframeConfig, which: str = "top") -> FrameWrench:
    w2 = _squared_speeds(speeds, config)
    if isinstance(tilt, EulerAngles):
        phi, theta = tilt.phi, tilt.theta
    else:
        phi, theta = float(tilt[0]), float(tilt[1])
    out = frame_wrench_components(phi, theta, w2[0], w2[1], w2[2], config.frame_params(which))
    return FrameWrench(np.array(out[:3]), np.array(out[3:]))


def frame_wrench_components(phi, theta, w2a, w2b, w2c, params):
    """Scalar core of the frame wrench: ``(Fx, Fy, Fz, Mx, My, Mz)``.

    ``w2*`` are squared rotor speeds and ``params`` comes from
    ``AirframeConfig.frame_params``. The integrator calls this directly.
    """
    x1, y1, x2, y2, x3, y3, c_lift, spin_drag = params
    fa, fb, fc = c_lift * w2a, c_lift * w2b, c_lift * w2c
    total = fa + fb + fc
    # sum of r_i x [0, 0, f_i] in the tilted frame, plus the drag couple
    lx = y1 * fa + y2 * fb + y3 * fc
    ly = -(x1 * fa + x2 * fb + x3 * fc)
    lz = spin_drag * (w2a + w2b + w2c)
    cp, sp = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    return (
        total * st,
        -total * ct * sp,
        total * cp * ct,
        ct * lx + st * lz,
        sp * st * lx + cp * ly - ct * sp * lz,
        -cp * st * lx + sp * ly + cp * ct * lz,
    )


def body_moment(top: FrameWrench, bottom: FrameWrench, config: AirframeConfig) -> np.ndarray:
    """Total moment on the central body about its CoM, body axes.

    Frame forces act through the joint lever arms; only the z parts of the
    frame moments reach the body.
    """
    ft, fb = top.force, bottom.force
    ht, hb = config.h_top, config.h_bottom
    return np.array([
        -ht * ft[1] + hb * fb[1],
        ht * ft[0] - hb * fb[0],
        top.moment[2] + bottom.moment[2],
    ])


def body_force_world(body_att: EulerAngles, top_force, bottom_force,
                     config: AirframeConfig) -> np.ndarray:
    """Net world-frame force: gravity plus both frame thrusts rotated to world."""
    R = body_rotation(body_att)
    f = R @ (np.asarray(top_force, dtype=float) + np.asarray(bottom_force, dtype=float))
    f[2] -= config.mass * config.gravity
    return f
