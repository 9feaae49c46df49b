"""Piecewise-smooth paths in the base space (t, q1, ..., qn).

Each segment carries its position map and an analytic velocity map, both
vectorised over the path parameter ``s``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError

TWO_PI = 2 * math.pi
CLOSE_TOL = 1e-12

ArrayMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Segment:
    s0: float
    s1: float
    position: ArrayMap  # s (N,) -> coords (N, 1+n)
    velocity: ArrayMap  # s (N,) -> d coords / ds (N, 1+n)

    def start(self) -> np.ndarray:
        return self.position(np.array([self.s0]))[0]

    def end(self) -> np.ndarray:
        return self.position(np.array([self.s1]))[0]

    def shifted(self, ds: float) -> "Segment":
        pos, vel = self.position, self.velocity
        return Segment(self.s0 + ds, self.s1 + ds, lambda s: pos(s - ds), lambda s: vel(s - ds))

    def reversed(self, offset: float) -> "Segment":
        """Traverse backwards; the new domain starts at ``offset``."""
        pos, vel, a, b = self.position, self.velocity, self.s0, self.s1

        def position(s):
            return pos(b - (s - offset))

        def velocity(s):
            return -vel(b - (s - offset))

        return Segment(offset, offset + (b - a), position, velocity)


@dataclass(frozen=True)
class Path:
    segments: tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("a path needs at least one segment")
        for a, b in zip(self.segments, self.segments[1:]):
            if abs(a.s1 - b.s0) > CLOSE_TOL or np.max(np.abs(a.end() - b.start())) > CLOSE_TOL:
                raise ValueError("path segments do not chain continuously")

    @property
    def s_start(self) -> float:
        return self.segments[0].s0

    @property
    def s_end(self) -> float:
        return self.segments[-1].s1

    def start(self) -> np.ndarray:
        return self.segments[0].start()

    def end(self) -> np.ndarray:
        return self.segments[-1].end()

    @property
    def closed(self) -> bool:
        return bool(np.max(np.abs(self.start() - self.end())) <= CLOSE_TOL)

    @property
    def n_params(self) -> int:
        return len(self.start()) - 1

    def then(self, other: "Path") -> "Path":
        ds = self.s_end - other.s_start
        return Path(self.segments + tuple(seg.shifted(ds) for seg in other.segments))

    def reversed(self) -> "Path":
        segs = []
        offset = self.s_start
        for seg in reversed(self.segments):
            r = seg.reversed(offset)
            segs.append(r)
            offset = r.s1
        return Path(tuple(segs))

    def repeated(self, n: int) -> "Path":
        """Traverse ``n`` times; negative ``n`` traverses the reversed path."""
        if n == 0:
            return constant_path(self.start())
        base = self if n > 0 else self.reversed()
        out = base
        for _ in range(abs(n) - 1):
            out = out.then(base)
        return out

    def sample(self, n_per_segment: int = 200) -> tuple[np.ndarray, np.ndarray]:
        ss, cs = [], []
        for seg in self.segments:
            s = np.linspace(seg.s0, seg.s1, n_per_segment + 1)
            ss.append(s)
            cs.append(seg.position(s))
        return np.concatenate(ss), np.concatenate(cs)


def _stack(*cols):
    return np.stack(np.broadcast_arrays(*cols), axis=-1).astype(float)


def constant_path(point: Sequence[float], length: float = 1.0) -> Path:
    p = np.asarray(point, dtype=float)

    def pos(s):
        return np.broadcast_to(p, np.shape(s) + p.shape).copy()

    def vel(s):
        return np.zeros(np.shape(s) + p.shape)

    return Path((Segment(0.0, float(length), pos, vel),))


def line(a: Sequence[float], b: Sequence[float], s0: float = 0.0, s1: float = 1.0) -> Path:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    rate = (b - a) / (s1 - s0)

    def pos(s):
        s = np.asarray(s, dtype=float)
        return a + (s - s0)[..., None] * rate

    def vel(s):
        return np.broadcast_to(rate, np.shape(s) + rate.shape).copy()

    return Path((Segment(float(s0), float(s1), pos, vel),))


def polyline(points: Sequence[Sequence[float]]) -> Path:
    """Straight legs through ``points``, each leg parameterised by its length."""
    pts = [np.asarray(p, dtype=float) for p in points]
    out = None
    s = 0.0
    for a, b in zip(pts, pts[1:]):
        length = float(np.linalg.norm(b - a))
        leg = line(a, b, s, s + length)
        out = leg if out is None else Path(out.segments + leg.segments)
        s += length
    return out


def circle(center: tuple[float, float], radius: float, t0: float = 0.0, x_sign: float = 1.0) -> Path:
    """(t0, cx + x_sign * R cos th, cy + R sin th) for th in [0, 2 pi]."""
    cx, cy = center

    def pos(th):
        th = np.asarray(th, dtype=float)
        return _stack(t0, cx + x_sign * radius * np.cos(th), cy + radius * np.sin(th))

    def vel(th):
        th = np.asarray(th, dtype=float)
        return _stack(0.0, -x_sign * radius * np.sin(th), radius * np.cos(th))

    return Path((Segment(0.0, TWO_PI, pos, vel),))


def circle_origin(r: float, t0: float = 0.0) -> Path:
    return circle((0.0, 0.0), r, t0)


def circle_ep_minus(rho: float, t0: float = 0.0) -> Path:
    return circle((-1.0, 0.0), rho, t0)


def circle_ep_plus(rho: float, t0: float = 0.0) -> Path:
    return circle((1.0, 0.0), rho, t0, x_sign=-1.0)


def square(center: tuple[float, float], side: float, t0: float = 0.0) -> Path:
    """Counter-clockwise square starting at the midpoint of its right edge."""
    cx, cy = center
    h = side / 2
    pts = [
        (t0, cx + h, cy),
        (t0, cx + h, cy + h),
        (t0, cx - h, cy + h),
        (t0, cx - h, cy - h),
        (t0, cx + h, cy - h),
        (t0, cx + h, cy),
    ]
    return polyline(pts)


def time_leg(q: Sequence[float], t0: float, t1: float) -> Path:
    return line((t0, *q), (t1, *q), 0.0, abs(t1 - t0) or 1.0)


LOOP_KINDS = ("circle_origin", "circle_ep_minus", "circle_ep_plus", "custom")


@dataclass(frozen=True)
class LoopSpec:
    kind: str
    radius: float = 0.5
    winding: int = 1
    time_slice: float = 0.0
    custom: Path | None = None

    def __post_init__(self):
        if self.kind not in LOOP_KINDS:
            raise DomainError(f"unknown loop kind {self.kind!r}")
        if self.kind == "circle_origin" and not 0 < self.radius < 1:
            raise DomainError(f"circle_origin needs 0 < r < 1, got {self.radius}")
        if self.kind in ("circle_ep_minus", "circle_ep_plus") and not 0 < self.radius < 2:
            raise DomainError(f"{self.kind} needs 0 < rho < 2, got {self.radius}")
        if self.kind == "custom" and self.custom is None:
            raise DomainError("custom loop needs a path")

    def with_winding(self, winding: int) -> "LoopSpec":
        return replace(self, winding=winding)

    def path(self) -> Path:
        if self.kind == "circle_origin":
            base = circle_origin(self.radius, self.time_slice)
        elif self.kind == "circle_ep_minus":
            base = circle_ep_minus(self.radius, self.time_slice)
        elif self.kind == "circle_ep_plus":
            base = circle_ep_plus(self.radius, self.time_slice)
        else:
            base = self.custom
        return base.repeated(self.winding)
