"""Dependency-free SVG plots of a simulation log.

Two diagnostic figures: a top view of the flown path over the reference,
and roll/pitch/yaw against time. Each plot is a fixed-viewBox SVG with
polylines, axis ticks and a legend. The data ranges are also stored as
``data-*`` attributes on the root element so tests can check them.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 480
MARGIN = (60, 20, 30, 50)  # left, right, top, bottom
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#7f7f7f")


class EmptyLogError(ValueError):
    pass


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    span = hi - lo
    raw = span / max(count, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(v) < 1e-12 * span else v)
        v += step
    return ticks


def _padded(lo: float, hi: float, frac: float = 0.05) -> tuple[float, float]:
    if hi - lo < 1e-9:
        c = 0.5 * (lo + hi)
        return c - 0.5, c + 0.5
    pad = frac * (hi - lo)
    return lo - pad, hi + pad


class _Canvas:
    def __init__(self, xr, yr, title, xlabel, ylabel, equal_aspect=False):
        left, right, top, bottom = MARGIN
        self.x0, self.x1 = left, WIDTH - right
        self.y0, self.y1 = top, HEIGHT - bottom
        if equal_aspect:
            xr, yr = _equalize(xr, yr, (self.x1 - self.x0) / (self.y1 - self.y0))
        self.xr, self.yr = xr, yr
        self.parts = []
        self.legend = []
        self._frame(title, xlabel, ylabel)

    def sx(self, v):
        return self.x0 + (v - self.xr[0]) / (self.xr[1] - self.xr[0]) * (self.x1 - self.x0)

    def sy(self, v):
        return self.y1 - (v - self.yr[0]) / (self.yr[1] - self.yr[0]) * (self.y1 - self.y0)

    def _frame(self, title, xlabel, ylabel):
        p = self.parts
        p.append(f'<rect x="{self.x0}" y="{self.y0}" width="{self.x1 - self.x0}" '
                 f'height="{self.y1 - self.y0}" fill="none" stroke="#000"/>')
        for t in _nice_ticks(*self.xr):
            x = self.sx(t)
            p.append(f'<line x1="{x:.2f}" y1="{self.y1}" x2="{x:.2f}" y2="{self.y1 + 5}" stroke="#000"/>')
            p.append(f'<text x="{x:.2f}" y="{self.y1 + 18}" font-size="11" '
                     f'text-anchor="middle">{t:g}</text>')
        for t in _nice_ticks(*self.yr):
            y = self.sy(t)
            p.append(f'<line x1="{self.x0 - 5}" y1="{y:.2f}" x2="{self.x0}" y2="{y:.2f}" stroke="#000"/>')
            p.append(f'<text x="{self.x0 - 8}" y="{y + 4:.2f}" font-size="11" '
                     f'text-anchor="end">{t:g}</text>')
        p.append(f'<text x="{(self.x0 + self.x1) / 2}" y="{self.y0 - 10}" font-size="14" '
                 f'text-anchor="middle">{escape(title)}</text>')
        p.append(f'<text x="{(self.x0 + self.x1) / 2}" y="{HEIGHT - 10}" font-size="12" '
                 f'text-anchor="middle">{escape(xlabel)}</text>')
        yc = (self.y0 + self.y1) / 2
        p.append(f'<text x="15" y="{yc}" font-size="12" text-anchor="middle" '
                 f'transform="rotate(-90 15 {yc})">{escape(ylabel)}</text>')

    def polyline(self, xs, ys, label, color, dashed=False):
        pts = " ".join(f"{self.sx(x):.2f},{self.sy(y):.2f}" for x, y in zip(xs, ys))
        dash = ' stroke-dasharray="6 4"' if dashed else ""
        self.parts.append(f'<polyline class="series" data-label="{escape(label)}" points="{pts}" '
                          f'fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        self.legend.append((label, color, dashed))

    def render(self, attrs: dict) -> str:
        lx, ly = self.x1 - 130, self.y0 + 10
        for i, (label, color, dashed) in enumerate(self.legend):
            y = ly + 16 * i
            dash = ' stroke-dasharray="6 4"' if dashed else ""
            self.parts.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 24}" y2="{y}" '
                              f'stroke="{color}" stroke-width="2"{dash}/>')
            self.parts.append(f'<text x="{lx + 30}" y="{y + 4}" font-size="11">{escape(label)}</text>')
        extra = "".join(f' data-{k}="{v:.9g}"' for k, v in attrs.items())
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
                f'viewBox="0 0 {WIDTH} {HEIGHT}"{extra}>')
        return "\n".join([head, '<rect width="100%" height="100%" fill="#fff"/>', *self.parts,
                          "</svg>"]) + "\n"


def _equalize(xr, yr, aspect):
    # widen whichever range is short so one metre is the same length on both axes
    w, h = xr[1] - xr[0], yr[1] - yr[0]
    if w / h < aspect:
        c, w = 0.5 * (xr[0] + xr[1]), h * aspect
        xr = (c - w / 2, c + w / 2)
    else:
        c, h = 0.5 * (yr[0] + yr[1]), w / aspect
        yr = (c - h / 2, c + h / 2)
    return xr, yr


def _columns(log, *names) -> list[np.ndarray]:
    if not log.rows:
        raise EmptyLogError("log has no rows")
    missing = [n for n in names if n not in log.channels]
    if missing:
        raise ValueError(f"log is missing channels {missing}")
    return [log.column(n) for n in names]


def trajectory_svg(log) -> str:
    """Top view (x-y) of the flown path with the reference path overlaid."""
    x, y, rx, ry = _columns(log, "x", "y", "sp_x", "sp_y")
    xr = _padded(min(x.min(), rx.min()), max(x.max(), rx.max()))
    yr = _padded(min(y.min(), ry.min()), max(y.max(), ry.max()))
    c = _Canvas(xr, yr, "Trajectory (top view)", "x [m]", "y [m]", equal_aspect=True)
    c.polyline(rx, ry, "reference", COLORS[3], dashed=True)
    c.polyline(x, y, "actual", COLORS[0])
    return c.render({"x-min": c.xr[0], "x-max": c.xr[1], "y-min": c.yr[0], "y-max": c.yr[1]})


def attitude_svg(log) -> str:
    """Roll, pitch and yaw in degrees against time."""
    t, *angles = _columns(log, "time", "roll", "pitch", "yaw")
    deg = [np.degrees(a) for a in angles]
    lo = min(float(a.min()) for a in deg)
    hi = max(float(a.max()) for a in deg)
    yr = _padded(lo, hi, 0.1)
    xr = (float(t[0]), float(t[-1])) if t[-1] > t[0] else (float(t[0]), float(t[0]) + 1.0)
    c = _Canvas(xr, yr, "Attitude", "time [s]", "angle [deg]")
    for a, label, color in zip(deg, ("roll", "pitch", "yaw"), COLORS):
        c.polyline(t, a, label, color)
    return c.render({"t-min": xr[0], "t-max": xr[1], "y-min": yr[0], "y-max": yr[1]})


def write_plots(log, out_dir) -> list[Path]:
    out = Path(out_dir)
    traj, att = trajectory_svg(log), attitude_svg(log)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "trajectory.svg", out / "attitude.svg"]
    paths[0].write_text(traj)
    paths[1].write_text(att)
    return paths
