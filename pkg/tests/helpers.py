"""Shared benchmark routines for the dynamics and acceptance tests."""

import math

import numpy as np

from hexsim.airframe import AirframeConfig
from hexsim.dynamics import VehicleState, rk4_step_vector, rotational_kinetic_energy
from hexsim.geometry import EulerAngles, rot_x, rot_y

# damping-free joints and motors off: nothing exerts torque on the body
SPIN_CONFIG = AirframeConfig(frame_damping=0.0)
SPIN_START = VehicleState(position=(0.0, 0.0, 10.0), attitude=EulerAngles(0.1, -0.2, 0.3),
                          body_rates=(3.0, -2.0, 5.0)).to_vector()
ATTITUDE_AND_RATES = slice(6, 12)


def integrate_spin(dt: float, duration: float = 1.0) -> np.ndarray:
    x = SPIN_START.copy()
    for _ in range(int(round(duration / dt))):
        x = rk4_step_vector(x, [0.0] * 6, dt, SPIN_CONFIG)
    return x


def observed_order(dts=(0.01, 0.005, 0.0025)) -> float:
    """Richardson estimate ``log2(|x_h - x_h/2| / |x_h/2 - x_h/4|)`` on attitude and rates."""
    a, b, c = (integrate_spin(dt)[ATTITUDE_AND_RATES] for dt in dts)
    return math.log2(np.abs(a - b).max() / np.abs(b - c).max())


def spin_energy_drift(dt: float = 1e-3, duration: float = 1.0) -> float:
    """Largest relative change of rotational kinetic energy along the spin."""
    x = SPIN_START.copy()
    e0 = rotational_kinetic_energy(x[9:12], SPIN_CONFIG)
    worst = 0.0
    for _ in range(int(round(duration / dt))):
        x = rk4_step_vector(x, [0.0] * 6, dt, SPIN_CONFIG)
        worst = max(worst, abs(rotational_kinetic_energy(x[9:12], SPIN_CONFIG) / e0 - 1.0))
    return worst


def literal_positions(which: str, d: float) -> list:
    """Rotor positions written out from the layout drawing (balanced bottom frame)."""
    s = math.sqrt(3) / 2 * d
    if which == "top":
        return [np.array([d / 2, s, 0.0]), np.array([-d, 0.0, 0.0]), np.array([d / 2, -s, 0.0])]
    return [np.array([d, 0.0, 0.0]), np.array([-d / 2, s, 0.0]), np.array([-d / 2, -s, 0.0])]


def oracle_wrench(phi, theta, speeds, positions, spin, cfg):
    """Sum rotor by rotor: rotated thrust plus rotated (lever arm x thrust + drag couple)."""
    R = rot_x(phi) @ rot_y(theta)
    force = np.zeros(3)
    moment = np.zeros(3)
    for r, w in zip(positions, speeds):
        f_local = np.array([0.0, 0.0, cfg.c_lift * w ** 2])
        tau_local = np.array([0.0, 0.0, spin * cfg.c_drag * w ** 2])
        force += R @ f_local
        moment += R @ np.cross(r, f_local) + R @ tau_local
    return force, moment


def oracle_worst_error(samples: int = 10_000, seed: int = 7) -> float:
    """Largest deviation of the frame wrench from the per-rotor oracle."""
    from hexsim.airframe import frame_force, frame_moment

    cfg = AirframeConfig()
    lim = cfg.tilt_limit
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(samples):
        which = "top" if i % 2 == 0 else "bottom"
        spin = -1.0 if which == "top" else 1.0
        phi, theta = rng.uniform(-lim, lim, size=2)
        w = rng.uniform(0.0, cfg.omega_max, size=3)
        f_ref, m_ref = oracle_wrench(phi, theta, w, literal_positions(which, cfg.arm_length),
                                     spin, cfg)
        f = frame_force((phi, theta), w, cfg, which)
        m = frame_moment((phi, theta), w, cfg, which)
        worst = max(worst, np.abs(f - f_ref).max(), np.abs(m - m_ref).max())
    return worst
