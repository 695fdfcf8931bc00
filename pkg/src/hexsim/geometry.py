"""Attitude representations and rotation utilities.

All angles are radians. Euler angles follow the Z-Y-X (yaw-pitch-roll)
sequence, so ``body_rotation(att) = Rz(psi) @ Ry(theta) @ Rx(phi)`` maps
body-frame vectors into the world frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GIMBAL_MARGIN = 1e-3


class GimbalSingularity(ValueError):
    """Raised when pitch is too close to +-pi/2 for the Euler-rate map."""


@dataclass(frozen=True)
class EulerAngles:
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(a) for a in (self.phi, self.theta, self.psi)):
            raise ValueError(f"non-finite Euler angles: {self}")

    @classmethod
    def from_array(cls, a) -> "EulerAngles":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    @classmethod
    def from_degrees(cls, phi: float, theta: float, psi: float) -> "EulerAngles":
        return cls(math.radians(phi), math.radians(theta), math.radians(psi))

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.theta, self.psi])


def skew(v) -> np.ndarray:
    """Matrix ``S`` with ``S @ w == cross(v, w)``."""
    x, y, z = float(v[0]), float(v[1]), float(v[2])
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def frame_tilt_rotation(phi: float, theta: float) -> np.ndarray:
    """Rotation from a tilting rotor frame to its (untilted) mount frame.

    Equal to ``rot_x(phi) @ rot_y(theta)``; written out in closed form
    because this is evaluated on every dynamics call. The joint has no
    yaw freedom, so only roll ``phi`` and pitch ``theta`` appear.
    """
    cp, sp = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    return np.array([
        [ct, 0.0, st],
        [sp * st, cp, -ct * sp],
        [-cp * st, sp, cp * ct],
    ])


def body_rotation(att: EulerAngles) -> np.ndarray:
    """Body-to-world rotation for Z-Y-X Euler angles."""
    cf, sf = math.cos(att.phi), math.sin(att.phi)
    ct, st = math.cos(att.theta), math.sin(att.theta)
    cs, ss = math.cos(att.psi), math.sin(att.psi)
    return np.array([
        [cs * ct, cs * st * sf - ss * cf, cs * st * cf + ss * sf],
        [ss * ct, ss * st * sf + cs * cf, ss * st * cf - cs * sf],
        [-st, ct * sf, ct * cf],
    ])


def euler_from_rotation(R) -> EulerAngles:
    """Recover Z-Y-X Euler angles from a body-to-world rotation matrix.

    Output is in the canonical ranges phi, psi in (-pi, pi] and
    theta in [-pi/2, pi/2].
    """
    theta = -math.asin(max(-1.0, min(1.0, float(R[2, 0]))))
    phi = math.atan2(float(R[2, 1]), float(R[2, 2]))
    psi = math.atan2(float(R[1, 0]), float(R[0, 0]))
    return EulerAngles(_canonical(phi), theta, _canonical(psi))


def _canonical(a: float) -> float:
    # atan2 already lands in [-pi, pi]; fold -pi onto +pi
    return math.pi if a == -math.pi else a


def euler_rate_matrix(att: EulerAngles) -> np.ndarray:
    """Map body angular velocity to Z-Y-X Euler angle rates.

    ``(phi_dot, theta_dot, psi_dot) = E @ omega_body``.
    """
    if abs(att.theta) >= math.pi / 2 - GIMBAL_MARGIN:
        raise GimbalSingularity(f"pitch {att.theta:.6f} rad within gimbal margin")
    sf, cf = math.sin(att.phi), math.cos(att.phi)
    ct, tt = math.cos(att.theta), math.tan(att.theta)
    return np.array([
        [1.0, sf * tt, cf * tt],
        [0.0, cf, -sf],
        [0.0, sf / ct, cf / ct],
    ])


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


def angle_error(target: float, measured: float) -> float:
    """Shortest signed angular difference ``target - measured``."""
    return wrap_angle(target - measured)
