"""Reference trajectory generators.

Two families:

* a tilted ellipse traced at constant angular rate (smooth), and
* a piecewise-linear path through the vertices of a space-filling Hilbert
  curve, time-parameterized with rest-to-rest trapezoidal speed profiles
  (nonsmooth: the path has corners, so the speed is zero at every waypoint).

Generators supply the reference *position*; the controller consumes nothing
else.  The reference *velocity* is also exposed, but only the Lyapunov
monitor reads it (for the moving-reference correction diagnostic).
"""
from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .model import Vec2


@dataclass(frozen=True)
class EllipseConfig:
    """Tilted ellipse through the origin, axes `a` and `b`, tilt `psi`."""

    psi: float = math.pi / 4      # tilt angle [rad]
    omega: float = 0.1            # angular rate [rad/s]
    a: float = 5.0                # first semi-axis scale [m]
    b: float = 3.0                # second semi-axis scale [m]

    def __post_init__(self):
        if not (self.omega > 0 and self.a > 0 and self.b > 0):
            raise ValueError("require omega, a, b > 0")


def ellipse_ref(t: float, cfg: EllipseConfig) -> Vec2:
    """Reference position at time t; starts at the origin (t=0)."""
    cp, sp = math.cos(cfg.psi), math.sin(cfg.psi)
    cw, sw = math.cos(cfg.omega * t), math.sin(cfg.omega * t)
    return np.array([
        cfg.a * cp - cfg.a * cp * cw - cfg.b * sp * sw,
        cfg.a * sp - cfg.a * sp * cw + cfg.b * cp * sw,
    ])


def ellipse_rate(t: float, cfg: EllipseConfig) -> Vec2:
    """Reference velocity at time t (monitor-side diagnostic only)."""
    cp, sp = math.cos(cfg.psi), math.sin(cfg.psi)
    cw, sw = math.cos(cfg.omega * t), math.sin(cfg.omega * t)
    w = cfg.omega
    return np.array([
        cfg.a * cp * w * sw - cfg.b * sp * w * cw,
        cfg.a * sp * w * sw + cfg.b * cp * w * cw,
    ])


def hilbert_waypoints(order: int, side: float) -> np.ndarray:
    """Vertices of the order-n Hilbert curve on a side x side square.

    Returns the 4**order grid nodes in curve order, anchored at the origin,
    grid pitch side/(2**order - 1).  Consecutive vertices differ in exactly
    one coordinate by one pitch; the path is self-avoiding and visits every
    node of the 2**order x 2**order grid exactly once.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    n = 1 << order
    pitch = side / (n - 1)
    pts = np.empty((4 ** order, 2))
    for d in range(4 ** order):
        x = y = 0
        t = d
        s = 1
        while s < n:
            rx = 1 & (t // 2)
            ry = 1 & (t ^ rx)
            if ry == 0:
                if rx == 1:
                    x = s - 1 - x
                    y = s - 1 - y
                x, y = y, x
            x += s * rx
            y += s * ry
            t //= 4
            s *= 2
        pts[d] = (x * pitch, y * pitch)
    return pts


@dataclass(frozen=True)
class TrapezoidProfile:
    """Rest-to-rest speed profile along one straight segment.

    Trapezoidal when the segment is long enough to reach v_max
    (duration = L/v + v/a), triangular otherwise (duration = 2 sqrt(L/a)).
    """

    length: float
    accel: float
    v_peak: float
    t_acc: float
    t_cruise: float
    duration: float

    @classmethod
    def plan(cls, length: float, v_max: float, a_max: float) -> "TrapezoidProfile":
        if length >= v_max * v_max / a_max:
            t_acc = v_max / a_max
            return cls(length=length, accel=a_max, v_peak=v_max, t_acc=t_acc,
                       t_cruise=length / v_max - t_acc,
                       duration=length / v_max + t_acc)
        t_acc = math.sqrt(length / a_max)
        return cls(length=length, accel=a_max, v_peak=a_max * t_acc,
                   t_acc=t_acc, t_cruise=0.0, duration=2.0 * t_acc)

    def distance(self, tau: float) -> float:
        """Arc length covered tau seconds into the segment (clamped)."""
        if tau <= 0.0:
            return 0.0
        if tau >= self.duration:
            return self.length
        if tau < self.t_acc:
            return 0.5 * self.accel * tau * tau
        if tau < self.t_acc + self.t_cruise:
            return 0.5 * self.accel * self.t_acc ** 2 \
                + self.v_peak * (tau - self.t_acc)
        td = self.duration - tau
        return self.length - 0.5 * self.accel * td * td

    def speed(self, tau: float) -> float:
        if tau <= 0.0 or tau >= self.duration:
            return 0.0
        if tau < self.t_acc:
            return self.accel * tau
        if tau < self.t_acc + self.t_cruise:
            return self.v_peak
        return self.accel * (self.duration - tau)


@dataclass(frozen=True)
class Segment:
    t_start: float
    origin: Vec2
    direction: Vec2          # unit vector
    profile: TrapezoidProfile


@dataclass(frozen=True)
class PiecewiseTrajectory:
    """Time-parameterized waypoint path; position continuous, corners at rest."""

    segments: tuple
    duration: float
    waypoints: np.ndarray
    start_times: tuple = ()

    def __post_init__(self):
        if not self.start_times:
            object.__setattr__(self, "start_times",
                               tuple(s.t_start for s in self.segments))

    def _locate(self, t: float):
        i = bisect_right(self.start_times, t) - 1
        return self.segments[max(i, 0)]

    def sample(self, t: float) -> Vec2:
        """Position at time t; clamps to the end waypoints outside [0, duration]."""
        if t <= 0.0:
            return self.waypoints[0].copy()
        if t >= self.duration:
            return self.waypoints[-1].copy()
        seg = self._locate(t)
        s = seg.profile.distance(t - seg.t_start)
        return seg.origin + s * seg.direction

    def rate(self, t: float) -> Vec2:
        """Velocity at time t (zero outside [0, duration] and at corners)."""
        if t <= 0.0 or t >= self.duration:
            return np.zeros(2)
        seg = self._locate(t)
        return seg.profile.speed(t - seg.t_start) * seg.direction


def time_parameterize(waypoints, v_max: float, a_max: float) -> PiecewiseTrajectory:
    """Chain rest-to-rest trapezoids over the waypoint polyline.

    Zero-length segments are skipped.  Per-segment durations follow the
    closed forms in TrapezoidProfile.plan.
    """
    if v_max <= 0 or a_max <= 0:
        raise ValueError("require v_max, a_max > 0")
    wps = np.asarray(waypoints, dtype=float)
    if wps.shape[0] < 2:
        raise ValueError("need at least 2 waypoints")
    segments = []
    t0 = 0.0
    for p, q in zip(wps[:-1], wps[1:]):
        length = float(np.hypot(*(q - p)))
        if length == 0.0:
            continue
        prof = TrapezoidProfile.plan(length, v_max, a_max)
        segments.append(Segment(t_start=t0, origin=p.copy(),
                                direction=(q - p) / length, profile=prof))
        t0 += prof.duration
    if not segments:
        raise ValueError("all segments degenerate")
    return PiecewiseTrajectory(segments=tuple(segments), duration=t0,
                               waypoints=wps)


def sample(traj: PiecewiseTrajectory, t: float) -> Vec2:
    """Position of a piecewise trajectory at time t (clamped at the ends)."""
    return traj.sample(t)


def waypoints_to_csv(waypoints, path) -> None:
    """Write waypoints as CSV rows (index, x [m], y [m])."""
    wps = np.asarray(waypoints, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "y"])
        for i, (x, y) in enumerate(wps):
            w.writerow([i, f"{x:.9g}", f"{y:.9g}"])


class ConstantReference:
    """Fixed setpoint (regulation)."""

    def __init__(self, point):
        self._p = np.asarray(point, dtype=float)

    def position(self, t: float) -> Vec2:
        return self._p

    def rate(self, t: float) -> Vec2:
        return np.zeros(2)


class EllipseReference:
    def __init__(self, cfg: EllipseConfig):
        self.cfg = cfg

    def position(self, t: float) -> Vec2:
        return ellipse_ref(t, self.cfg)

    def rate(self, t: float) -> Vec2:
        return ellipse_rate(t, self.cfg)


class PathReference:
    """Piecewise trajectory with a hold phase appended after the last corner."""

    def __init__(self, traj: PiecewiseTrajectory, settle: float = 0.0):
        self.traj = traj
        self.settle = settle

    @property
    def duration(self) -> float:
        return self.traj.duration + self.settle

    def position(self, t: float) -> Vec2:
        return self.traj.sample(t)

    def rate(self, t: float) -> Vec2:
        return self.traj.rate(t)
