"""Payload reference trajectories with analytic derivatives."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .payload import PayloadReference

KINDS = ("hover", "circle", "rectangle", "waypoints")


def _ref(p, v, a) -> PayloadReference:
    z = np.zeros(3)
    return PayloadReference(np.asarray(p, float), np.asarray(v, float), np.asarray(a, float),
                            np.array([1.0, 0.0, 0.0, 0.0]), z, z.copy())


@dataclass(frozen=True)
class Hover:
    position: tuple = (0.0, 0.0, 0.5)
    duration: float = 10.0

    tracking_start = 0.0

    def sample(self, t: float) -> PayloadReference:
        return _ref(self.position, np.zeros(3), np.zeros(3))

    @property
    def start(self) -> np.ndarray:
        return np.asarray(self.position, float)


@dataclass(frozen=True)
class Circle:
    radius: float = 1.0
    period: float = 15.0
    height: float = 0.5
    center: tuple = (0.0, 0.0)
    duration: float = 30.0

    tracking_start = 0.0

    def sample(self, t: float) -> PayloadReference:
        w = 2.0 * math.pi / self.period
        c, s = math.cos(w * t), math.sin(w * t)
        r = self.radius
        p = (self.center[0] + r * c, self.center[1] + r * s, self.height)
        v = (-r * w * s, r * w * c, 0.0)
        a = (-r * w * w * c, -r * w * w * s, 0.0)
        return _ref(p, v, a)

    @property
    def start(self) -> np.ndarray:
        return self.sample(0.0).position


class Waypoints:
    """Straight segments, each traversed with a trapezoidal speed profile
    that starts and ends at rest.

    ``blend`` is the distance over which speed ramps between zero and
    ``cruise``.  Segments shorter than ``2 * blend`` use a triangular
    profile with the same acceleration.  If ``takeoff`` is set the first
    segment is excluded from the tracking window.
    """

    def __init__(self, points, cruise: float = 0.25, blend: float = 0.2,
                 hold: float = 0.0, takeoff: bool = False, tail: float = 2.0):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
            raise ConfigError("waypoints need at least two 3-D points")
        if not (cruise > 0.0 and blend > 0.0):
            raise ConfigError("cruise speed and blend distance must be positive")
        self.points = pts
        self.cruise = cruise
        self.blend = blend
        self.hold = hold
        self.takeoff = takeoff
        self.tail = tail
        self.accel = cruise * cruise / (2.0 * blend)

        self._segments = []
        t = hold
        for p0, p1 in zip(pts[:-1], pts[1:]):
            L = float(np.linalg.norm(p1 - p0))
            if L == 0.0:
                continue
            if L >= 2.0 * blend:
                vpk = cruise
                t_ramp = cruise / self.accel
                T = 2.0 * t_ramp + (L - 2.0 * blend) / cruise
            else:
                vpk = math.sqrt(self.accel * L)
                t_ramp = vpk / self.accel
                T = 2.0 * t_ramp
            self._segments.append((t, T, p0, (p1 - p0) / L, L, vpk, t_ramp))
            t += T
        self.end_time = t
        self.duration = t + tail
        if takeoff and self._segments:
            first = self._segments[0]
            self.tracking_start = first[0] + first[1]
        else:
            self.tracking_start = 0.0

    @property
    def start(self) -> np.ndarray:
        return self.points[0].copy()

    def _along(self, tau, T, L, vpk, t_ramp):
        a = self.accel
        if tau <= 0.0:
            return 0.0, 0.0, 0.0
        if tau >= T:
            return L, 0.0, 0.0
        if tau < t_ramp:
            return 0.5 * a * tau * tau, a * tau, a
        if tau <= T - t_ramp:
            s0 = 0.5 * a * t_ramp * t_ramp
            return s0 + vpk * (tau - t_ramp), vpk, 0.0
        r = T - tau
        return L - 0.5 * a * r * r, a * r, -a

    def sample(self, t: float) -> PayloadReference:
        if not self._segments or t < self._segments[0][0]:
            return _ref(self.points[0], np.zeros(3), np.zeros(3))
        for (t0, T, p0, d, L, vpk, t_ramp) in self._segments:
            if t < t0 + T:
                s, sd, sdd = self._along(t - t0, T, L, vpk, t_ramp)
                return _ref(p0 + s * d, sd * d, sdd * d)
        return _ref(self.points[-1], np.zeros(3), np.zeros(3))


def rectangle(length_x: float = 2.0, length_y: float = 1.0, height: float = 0.5,
              start_height: float = 0.0, origin=(-1.0, -0.5), cruise: float = 0.25,
              blend: float = 0.2, hold: float = 1.0, tail: float = 2.0) -> Waypoints:
    """Take off vertically to ``height`` then fly one lap of an x-y rectangle."""
    x0, y0 = origin
    pts = [
        (x0, y0, start_height),
        (x0, y0, height),
        (x0 + length_x, y0, height),
        (x0 + length_x, y0 + length_y, height),
        (x0, y0 + length_y, height),
        (x0, y0, height),
    ]
    return Waypoints(pts, cruise=cruise, blend=blend, hold=hold,
                     takeoff=start_height != height, tail=tail)


def make_trajectory(spec: dict):
    """Build a trajectory from its scenario-file mapping."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    try:
        if kind == "hover":
            return Hover(tuple(spec.get("position_m", (0.0, 0.0, 0.5))),
                         float(spec.get("duration_s", 10.0)))
        if kind == "circle":
            return Circle(float(spec.get("radius_m", 1.0)), float(spec.get("period_s", 15.0)),
                          float(spec.get("height_m", 0.5)), tuple(spec.get("center_m", (0.0, 0.0))),
                          float(spec.get("duration_s", 30.0)))
        if kind == "rectangle":
            return rectangle(float(spec.get("length_x_m", 2.0)), float(spec.get("length_y_m", 1.0)),
                             float(spec.get("height_m", 0.5)), float(spec.get("start_height_m", 0.0)),
                             tuple(spec.get("origin_m", (-1.0, -0.5))),
                             float(spec.get("cruise_speed_mps", 0.25)),
                             float(spec.get("corner_blend_m", 0.2)),
                             float(spec.get("hold_s", 1.0)), float(spec.get("tail_s", 2.0)))
        if kind == "waypoints":
            return Waypoints(spec["points_m"], float(spec.get("cruise_speed_mps", 0.25)),
                             float(spec.get("corner_blend_m", 0.2)), float(spec.get("hold_s", 0.0)),
                             bool(spec.get("takeoff", False)), float(spec.get("tail_s", 2.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {kind} trajectory: {exc}") from exc
    raise ConfigError(f"unknown trajectory kind {kind!r}; expected one of {', '.join(KINDS)}")


def generate_reference(spec, t: float) -> PayloadReference:
    """Reference sample at time ``t`` for a trajectory object or mapping."""
    if t < 0.0:
        raise ValueError("time must be non-negative")
    traj = make_trajectory(spec) if isinstance(spec, dict) else spec
    return traj.sample(t)
