"""Scenario execution: references, closed-loop rollout, logging and metrics."""

from __future__ import annotations

import copy
import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from . import __version__
from .airframe import AirframeConfig, ConfigError
from .control import (DIAGNOSTIC_CHANNELS, Controller, ControllerConfig, Setpoint,
                      controller_tick, pwm_to_speed)
from .dynamics import MAX_DT, VehicleState, _constants, rk4_step_list
from .geometry import EulerAngles

SCENARIO_DIR = Path(__file__).parent / "scenarios"

STATE_CHANNELS = (
    "x", "y", "z", "vx", "vy", "vz", "roll", "pitch", "yaw", "p", "q", "r",
    "top_roll", "top_pitch", "top_roll_rate", "top_pitch_rate",
    "bottom_roll", "bottom_pitch", "bottom_roll_rate", "bottom_pitch_rate",
)
SETPOINT_CHANNELS = ("sp_x", "sp_y", "sp_z", "sp_roll", "sp_pitch", "sp_yaw")
ACTUATOR_CHANNELS = tuple(f"u{i}" for i in range(1, 7))
SPEED_CHANNELS = tuple(f"w{i}" for i in range(1, 7))
LOG_CHANNELS = (("time",) + STATE_CHANNELS + SETPOINT_CHANNELS + DIAGNOSTIC_CHANNELS
                + ACTUATOR_CHANNELS + SPEED_CHANNELS)

TRAJECTORY_TYPES = ("hover", "circle", "setpoint_sequence", "step_test")
STEP_AXES = ("x", "y", "z", "roll", "pitch", "yaw")


class DivergenceDetected(RuntimeError):
    """Rollout aborted; ``log`` holds everything recorded up to the abort."""

    def __init__(self, reason: str, log: "SimLog"):
        super().__init__(reason)
        self.reason = reason
        self.log = log


class EmptyWindow(ValueError):
    pass


def _round9(v: float) -> float:
    return float(f"{v:.9g}")


# --------------------------------------------------------------------------- references

@dataclass(frozen=True)
class CircleSpec:
    center: tuple = (2.3, 3.5, 1.5)
    radius: float = 1.0
    period: float = 10.0
    altitude: Optional[float] = None


def circle_reference(t: float, spec: CircleSpec) -> Setpoint:
    """Point on the circle ``center - r (cos wt, sin wt, 0)`` with level attitude.

    Carries the analytic velocity and acceleration as feedforward.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    w = 2.0 * math.pi / spec.period
    c, s = math.cos(w * t), math.sin(w * t)
    r = spec.radius
    cx, cy, cz = spec.center
    z = cz if spec.altitude is None else spec.altitude
    return Setpoint(
        position=(cx - r * c, cy - r * s, z),
        attitude=(0.0, 0.0, 0.0),
        velocity=(r * w * s, -r * w * c, 0.0),
        acceleration=(r * w * w * c, r * w * w * s, 0.0),
    )


class Trajectory:
    """Setpoint generator built from the ``trajectory`` block of a scenario."""

    def __init__(self, spec: dict):
        self.spec = spec
        kind = spec.get("type")
        self.kind = kind
        if kind == "circle":
            self.circle = CircleSpec(tuple(spec.get("center", (2.3, 3.5, 1.5))),
                                     float(spec.get("radius", 1.0)),
                                     float(spec.get("period", 10.0)),
                                     spec.get("altitude"))
        elif kind == "hover":
            self.fixed = Setpoint(tuple(spec.get("position", (0.0, 0.0, 1.0))),
                                  _deg3(spec.get("attitude_deg", (0.0, 0.0, 0.0))))
        elif kind == "setpoint_sequence":
            self.points = sorted(
                ((float(p.get("t", 0.0)), Setpoint(tuple(p["position"]),
                                                   _deg3(p.get("attitude_deg", (0, 0, 0)))))
                 for p in spec["points"]),
                key=lambda item: item[0],
            )
        elif kind == "step_test":
            base_pos = tuple(spec.get("base_position", (0.0, 0.0, 1.0)))
            base_att = _deg3(spec.get("base_attitude_deg", (0.0, 0.0, 0.0)))
            axis = spec["axis"]
            mag = float(spec["magnitude"])
            pos, att = list(base_pos), list(base_att)
            i = STEP_AXES.index(axis)
            if i < 3:
                pos[i] += mag
            else:
                att[i - 3] += math.radians(mag)
            self.before = Setpoint(base_pos, base_att)
            self.after = Setpoint(tuple(pos), tuple(att))
            self.start = float(spec.get("start_time", 1.0))
        else:
            raise ConfigError(f"trajectory.type must be one of {TRAJECTORY_TYPES}")

    def __call__(self, t: float) -> Setpoint:
        if self.kind == "circle":
            return circle_reference(t, self.circle)
        if self.kind == "hover":
            return self.fixed
        if self.kind == "step_test":
            return self.after if t >= self.start else self.before
        current = self.points[0][1]
        for t0, sp in self.points:
            if t >= t0:
                current = sp
        return current


def _deg3(v) -> tuple:
    return tuple(math.radians(float(a)) for a in v)


def _trajectory_violations(spec) -> list[str]:
    if not isinstance(spec, dict):
        return ["trajectory must be an object"]
    kind = spec.get("type")
    if kind not in TRAJECTORY_TYPES:
        return [f"trajectory.type must be one of {TRAJECTORY_TYPES} (got {kind!r})"]
    errs = []

    def finite_vec(key, n=3, required=False):
        if key not in spec:
            if required:
                errs.append(f"trajectory.{key} is required")
            return
        v = spec[key]
        if not (isinstance(v, list) and len(v) == n and all(_finite(a) for a in v)):
            errs.append(f"trajectory.{key} must be {n} finite numbers")

    if kind == "circle":
        finite_vec("center")
        for key in ("radius", "period"):
            if key in spec and not (_finite(spec[key]) and spec[key] > 0):
                errs.append(f"trajectory.{key} must be positive")
        if spec.get("altitude") is not None and not _finite(spec["altitude"]):
            errs.append("trajectory.altitude must be finite")
    elif kind == "hover":
        finite_vec("position")
        finite_vec("attitude_deg")
    elif kind == "setpoint_sequence":
        pts = spec.get("points")
        if not (isinstance(pts, list) and pts):
            errs.append("trajectory.points must be a non-empty list")
        else:
            for i, p in enumerate(pts):
                if not (isinstance(p, dict) and isinstance(p.get("position"), list)
                        and len(p["position"]) == 3 and all(_finite(a) for a in p["position"])):
                    errs.append(f"trajectory.points[{i}].position must be 3 finite numbers")
    elif kind == "step_test":
        if spec.get("axis") not in STEP_AXES:
            errs.append(f"trajectory.axis must be one of {STEP_AXES}")
        if not _finite(spec.get("magnitude")):
            errs.append("trajectory.magnitude must be a finite number")
        finite_vec("base_position")
        finite_vec("base_attitude_deg")
        if spec.get("axis") in ("roll", "pitch") and _finite(spec.get("magnitude")) \
                and abs(spec["magnitude"]) > 20.0:
            errs.append("trajectory.magnitude for roll/pitch steps must stay within 20 deg")
    return errs


def _finite(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


# --------------------------------------------------------------------------- scenario

@dataclass
class ScenarioConfig:
    name: str
    airframe: AirframeConfig
    controller: ControllerConfig
    trajectory: dict
    initial_state: VehicleState
    duration: float = 10.0
    dt: float = 0.001
    seed: int = 0
    decimation: int = 10
    window_start: Optional[float] = None
    settle_threshold: float = 0.1
    max_position_error: float = 10.0
    max_impact_speed: float = 3.0
    ground: bool = False
    motors_enabled: bool = True
    acceptance: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict, repr=False)

    @property
    def metrics_window_start(self) -> float:
        return 0.5 * self.duration if self.window_start is None else self.window_start


def _initial_state(data: dict) -> VehicleState:
    return VehicleState(
        position=data.get("position", (0.0, 0.0, 0.0)),
        velocity=data.get("velocity", (0.0, 0.0, 0.0)),
        attitude=EulerAngles(*_deg3(data.get("attitude_deg", (0.0, 0.0, 0.0)))),
        body_rates=data.get("body_rates", (0.0, 0.0, 0.0)),
        top_tilt=_deg3(data.get("top_tilt_deg", (0.0, 0.0)))[:2] if "top_tilt_deg" in data
        else (0.0, 0.0),
        bottom_tilt=_deg3(data.get("bottom_tilt_deg", (0.0, 0.0)))[:2] if "bottom_tilt_deg" in data
        else (0.0, 0.0),
    )


def set_dotted(data: dict, key: str, value) -> None:
    """Assign ``value`` at dotted ``key`` inside nested dicts."""
    parts = key.split(".")
    node = data
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_json(path) -> dict:
    """Read a JSON object; syntax errors become ConfigError with line/column."""
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def resolve_scenario_path(name) -> Path:
    """Return ``name`` as a path, falling back to a shipped scenario of that name."""
    p = Path(name)
    if p.exists():
        return p
    shipped = SCENARIO_DIR / (p.name if p.suffix == ".json" else p.name + ".json")
    return shipped if shipped.exists() else p


def expand_scenario_dict(data: dict, base_dir: Path) -> dict:
    """Inline referenced airframe/controller files so overrides can reach them."""
    data = copy.deepcopy(data)
    for key in ("airframe", "controller"):
        ref = data.get(key)
        if isinstance(ref, str):
            data[key] = load_json(base_dir / ref)
        elif ref is None:
            data[key] = {}
    return data


_SCENARIO_KEYS = {"name", "airframe", "controller", "trajectory", "initial_state", "duration",
                  "dt", "seed", "decimation", "metrics", "divergence", "ground",
                  "motors_enabled", "acceptance", "description"}


def scenario_from_dict(data: dict) -> ScenarioConfig:
    """Validate an expanded scenario dict, reporting every violation at once."""
    errs = []
    for key in sorted(set(data) - _SCENARIO_KEYS):
        errs.append(f"unknown scenario field {key!r}")
    airframe = controller = None
    try:
        airframe = AirframeConfig.from_dict(data.get("airframe") or {"mass": None})
    except ConfigError as exc:
        errs += exc.errors
    except TypeError as exc:
        errs.append(f"airframe: {exc}")
    try:
        controller = ControllerConfig.from_dict(data.get("controller") or {})
    except ConfigError as exc:
        errs += exc.errors
    except TypeError as exc:
        errs.append(f"controller: {exc}")
    errs += _trajectory_violations(data.get("trajectory"))

    duration, dt = data.get("duration", 10.0), data.get("dt", 0.001)
    if not (_finite(duration) and duration > 0):
        errs.append(f"duration must be > 0 (got {duration!r})")
    if not (_finite(dt) and 0 < dt <= MAX_DT):
        errs.append(f"dt must be in (0, {MAX_DT}] (got {dt!r})")
    dec = data.get("decimation", 10)
    if not (isinstance(dec, int) and not isinstance(dec, bool) and dec >= 1):
        errs.append(f"decimation must be an integer >= 1 (got {dec!r})")
    seed = data.get("seed", 0)
    if not (isinstance(seed, int) and not isinstance(seed, bool)):
        errs.append(f"seed must be an integer (got {seed!r})")
    if controller is not None and _finite(dt) and dt > 0:
        ratio = 1.0 / (controller.rate_inner_hz * dt)
        if ratio < 1.0 - 1e-9 or abs(ratio - round(ratio)) > 1e-6:
            errs.append("controller.rate_inner_hz period must be a whole number of physics steps")

    metrics = data.get("metrics", {})
    divergence = data.get("divergence", {})
    ws = metrics.get("window_start")
    if ws is not None and not (_finite(ws) and ws >= 0 and (not _finite(duration) or ws < duration)):
        errs.append("metrics.window_start must be in [0, duration)")
    for blk, key in ((metrics, "settle_threshold"), (divergence, "max_position_error"),
                     (divergence, "max_impact_speed")):
        if key in blk and not (_finite(blk[key]) and blk[key] > 0):
            errs.append(f"{key} must be positive")
    init = data.get("initial_state", {})
    state = None
    try:
        state = _initial_state(init)
    except (TypeError, ValueError) as exc:
        errs.append(f"initial_state: {exc}")
    if state is not None and airframe is not None and not state.is_within_stops(airframe):
        errs.append("initial_state: frame tilt beyond the mechanical stop")
    if errs:
        raise ConfigError(errs)
    return ScenarioConfig(
        name=data.get("name", "scenario"),
        airframe=airframe,
        controller=controller,
        trajectory=data["trajectory"],
        initial_state=state,
        duration=float(duration),
        dt=float(dt),
        seed=seed,
        decimation=dec,
        window_start=ws,
        settle_threshold=float(metrics.get("settle_threshold", 0.1)),
        max_position_error=float(divergence.get("max_position_error", 10.0)),
        max_impact_speed=float(divergence.get("max_impact_speed", 3.0)),
        ground=bool(data.get("ground", False)),
        motors_enabled=bool(data.get("motors_enabled", True)),
        acceptance=dict(data.get("acceptance", {})),
        source=data,
    )


def load_scenario(path, overrides=()) -> ScenarioConfig:
    """Load a scenario file, apply ``key=value`` overrides, then validate."""
    path = resolve_scenario_path(path)
    data = expand_scenario_dict(load_json(path), path.parent)
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        set_dotted(data, key, value)
    return scenario_from_dict(data)


# --------------------------------------------------------------------------- log + metrics

@dataclass
class SimLog:
    channels: tuple
    rows: list
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        i = self.channels.index(name)
        return np.array([row[i] for row in self.rows])

    def array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float).reshape(len(self.rows), len(self.channels))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.channels) + "\n")
        for row in self.rows:
            buf.write(",".join(f"{v:.9g}" for v in row))
            buf.write("\n")
        return buf.getvalue()

    def write(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "log.csv").write_text(self.to_csv())
        (directory / "meta.json").write_text(json.dumps(self.meta, indent=2, sort_keys=True))

    @classmethod
    def read_csv(cls, path) -> "SimLog":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header:
                raise ValueError(f"{path}: empty log")
            rows = [[float(v) for v in row] for row in reader if row]
        meta_path = Path(path).with_name("meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(tuple(header), rows, meta)


class TrackingMetrics(NamedTuple):
    rms_position_error: float
    max_position_error: float
    rms_attitude_error: float
    max_attitude_error: float
    settling_time: Optional[float]
    saturation_fraction: float

    def to_dict(self) -> dict:
        return self._asdict()


def compute_metrics(log: SimLog, window_start: float, settle_threshold: float = 0.1) -> TrackingMetrics:
    """Tracking errors against the logged setpoints from ``window_start`` on.

    Attitude error is the norm of the wrapped per-axis error. Settling time
    is the first logged time after which the position error stays below
    ``settle_threshold`` for the rest of the log, or None if it never does.
    """
    if not log.rows:
        raise EmptyWindow("log is empty")
    a = log.array()
    col = {name: i for i, name in enumerate(log.channels)}
    t = a[:, col["time"]]
    pos = a[:, [col["x"], col["y"], col["z"]]]
    sp = a[:, [col["sp_x"], col["sp_y"], col["sp_z"]]]
    pos_err = np.linalg.norm(pos - sp, axis=1)
    att = a[:, [col["roll"], col["pitch"], col["yaw"]]]
    sp_att = a[:, [col["sp_roll"], col["sp_pitch"], col["sp_yaw"]]]
    att_err = np.linalg.norm(np.remainder(att - sp_att + np.pi, 2 * np.pi) - np.pi, axis=1)

    mask = t >= window_start
    if not mask.any():
        raise EmptyWindow(f"no samples at or after t={window_start}")
    above = np.nonzero(pos_err >= settle_threshold)[0]
    if len(above) == 0:
        settling = float(t[0])
    elif above[-1] == len(t) - 1:
        settling = None
    else:
        settling = float(t[above[-1] + 1])
    sat = a[:, col["saturated"]] if "saturated" in col else np.zeros(len(t))
    return TrackingMetrics(
        rms_position_error=float(np.sqrt(np.mean(pos_err[mask] ** 2))),
        max_position_error=float(pos_err[mask].max()),
        rms_attitude_error=float(np.sqrt(np.mean(att_err[mask] ** 2))),
        max_attitude_error=float(att_err[mask].max()),
        settling_time=settling,
        saturation_fraction=float(np.mean(sat > 0.5)),
    )


# --------------------------------------------------------------------------- rollout

def _noisy(x: list, noise, rng) -> list:
    sig = ([noise.position] * 3 + [noise.velocity] * 3 + [noise.attitude] * 3
           + [noise.body_rate] * 3 + [noise.tilt] * 2 + [noise.tilt_rate] * 2
           + [noise.tilt] * 2 + [noise.tilt_rate] * 2)
    draws = rng.standard_normal(len(x))
    return [v + s * d for v, s, d in zip(x, sig, draws)]


def run_metadata(scenario: ScenarioConfig) -> dict:
    return {
        "scenario": scenario.name,
        "code_version": __version__,
        "airframe": scenario.airframe.to_dict(),
        "controller": scenario.controller.to_dict(),
        "trajectory": scenario.trajectory,
        "duration": scenario.duration,
        "dt": scenario.dt,
        "seed": scenario.seed,
        "decimation": scenario.decimation,
        "metrics_window_start": scenario.metrics_window_start,
        "settle_threshold": scenario.settle_threshold,
    }


def run_scenario(scenario: ScenarioConfig, decimation: Optional[int] = None):
    """Closed-loop rollout. Returns ``(SimLog, TrackingMetrics)``.

    Physics runs at ``scenario.dt``; the controller runs every
    ``round(1 / (rate_inner_hz * dt))`` physics ticks and its output is held
    in between. Raises DivergenceDetected with the partial log on a
    non-finite state, an excessive position error, or a hard ground impact.
    """
    airframe = scenario.airframe
    ctrl = Controller(airframe, scenario.controller)
    k = _constants(airframe)
    dt = scenario.dt
    dec = decimation or scenario.decimation
    per_tick = max(1, round(1.0 / (scenario.controller.rate_inner_hz * dt)))
    ctrl_dt = per_tick * dt
    n_steps = int(round(scenario.duration / dt))
    trajectory = Trajectory(scenario.trajectory)
    noise = scenario.controller.noise
    rng = np.random.default_rng(scenario.seed)

    meta = run_metadata(scenario)
    log = SimLog(LOG_CHANNELS, [], meta)
    x = scenario.initial_state.to_vector().tolist()
    memory = ctrl.initial_memory()
    zero_diag = tuple(0.0 for _ in DIAGNOSTIC_CHANNELS)
    diag_row, u, w, w2 = zero_diag, (0.0,) * 6, (0.0,) * 6, (0.0,) * 6
    setpoint = trajectory(0.0)

    for i in range(n_steps):
        t = i * dt
        setpoint = trajectory(t)
        if i % per_tick == 0:
            measured = _noisy(x, noise, rng) if noise.enabled else x
            out, memory, diag = controller_tick(ctrl, setpoint, measured, memory, ctrl_dt)
            if scenario.motors_enabled:
                u = out.u
            else:
                u = (0.0,) * 6
            diag_row = tuple(diag[c] for c in DIAGNOSTIC_CHANNELS)
            w = tuple(pwm_to_speed(v, airframe) for v in u)
            w2 = tuple(v * v for v in w)
        if i % dec == 0:
            row = ([t] + x + list(setpoint.position) + list(setpoint.attitude)
                   + list(diag_row) + list(u) + list(w))
            log.rows.append([_round9(v) for v in row])
        try:
            x = rk4_step_list(x, w2, dt, k)
        except Exception as exc:
            raise DivergenceDetected(f"t={t + dt:.3f}s: {exc}", log) from exc
        if scenario.ground and x[2] < 0.0:
            if -x[5] > scenario.max_impact_speed:
                raise DivergenceDetected(
                    f"t={t + dt:.3f}s: ground impact at {-x[5]:.2f} m/s", log)
            x[2] = 0.0
            x[3] = x[4] = x[5] = 0.0
        err = math.dist(x[:3], setpoint.position)
        if err > scenario.max_position_error:
            raise DivergenceDetected(
                f"t={t + dt:.3f}s: position error {err:.2f} m exceeds bound", log)

    metrics = compute_metrics(log, scenario.metrics_window_start, scenario.settle_threshold)
    return log, metrics


# --------------------------------------------------------------------------- decoupling

class DecouplingResult(NamedTuple):
    translation: TrackingMetrics
    attitude: TrackingMetrics
    max_attitude_excursion: float
    max_position_excursion: float


def _excursions(log: SimLog, base_position, start: float):
    a = log.array()
    col = {name: i for i, name in enumerate(log.channels)}
    mask = a[:, col["time"]] >= start
    att = a[mask][:, [col["roll"], col["pitch"]]]
    horiz = a[mask][:, [col["x"], col["y"]]] - np.asarray(base_position[:2])
    return float(np.abs(att).max()), float(np.linalg.norm(horiz, axis=1).max())


def decoupling_test(axis: str, magnitude: float, base: ScenarioConfig,
                    attitude_step_deg: float = 5.0) -> DecouplingResult:
    """Check that translation and attitude can be commanded independently.

    Runs a ``magnitude`` metre step on ``axis`` (x or y) with level attitude
    reference, then a ``attitude_step_deg`` pitch (for x) or roll (for y)
    step with the position reference held. Both runs start from the base
    scenario's initial state and reference position.
    """
    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    traj = base.trajectory
    base_pos = list(traj.get("base_position", traj.get("position", [0.0, 0.0, 1.0])))
    start = float(traj.get("start_time", 1.0))
    trans_axis, trans_mag = axis, magnitude
    att_axis, att_mag = ("pitch" if axis == "x" else "roll"), attitude_step_deg

    def run(step_axis, mag):
        spec = {"type": "step_test", "axis": step_axis, "magnitude": mag,
                "base_position": base_pos, "start_time": start}
        sc = copy.copy(base)
        sc.trajectory = spec
        return run_scenario(sc)

    log_t, m_t = run(trans_axis, trans_mag)
    log_a, m_a = run(att_axis, att_mag)
    att_exc, _ = _excursions(log_t, base_pos, 0.0)
    _, pos_exc = _excursions(log_a, base_pos, 0.0)
    return DecouplingResult(m_t, m_a, att_exc, pos_exc)
