"""Planar poses, angles and rigid transforms.

All angles are degrees. Headings use 0 deg = +x, counterclockwise positive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


def wrap_angle(a: float) -> float:
    """Wrap ``a`` (degrees) into the half-open interval (-180, 180]."""
    if -180.0 < a <= 180.0:
        return a
    if not math.isfinite(a):
        raise ValueError(f"angle must be finite, got {a!r}")
    r = math.fmod(a, 360.0)
    if r <= -180.0:
        r += 360.0
    elif r > 180.0:
        r -= 360.0
    return r


def signed_heading_error(frm: float, to: float) -> float:
    return wrap_angle(to - frm)


@dataclass(frozen=True, slots=True)
class Vec2:
    x: float
    y: float

    def __add__(self, other: Vec2) -> Vec2:
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: Vec2) -> Vec2:
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, k: float) -> Vec2:
        return Vec2(self.x * k, self.y * k)

    __rmul__ = __mul__

    def __neg__(self) -> Vec2:
        return Vec2(-self.x, -self.y)

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def bearing(self) -> float:
        """Direction of this vector in degrees, wrapped."""
        return wrap_angle(math.degrees(math.atan2(self.y, self.x)))

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)

    @staticmethod
    def unit(heading: float) -> Vec2:
        r = math.radians(heading)
        return Vec2(math.cos(r), math.sin(r))


ORIGIN = Vec2(0.0, 0.0)


@dataclass(frozen=True, slots=True)
class Pose2:
    position: Vec2
    heading: float

    def __post_init__(self) -> None:
        if not -180.0 < self.heading <= 180.0:
            object.__setattr__(self, "heading", wrap_angle(self.heading))


@dataclass(frozen=True, slots=True)
class Rect:
    center: Vec2
    half_width: float
    half_height: float

    def __post_init__(self) -> None:
        if not (self.half_width > 0 and self.half_height > 0):
            raise ValueError("Rect half extents must be positive")

    @classmethod
    def square(cls, side: float, center: Vec2 = ORIGIN) -> Rect:
        return cls(center, side / 2.0, side / 2.0)

    def contains(self, p: Vec2) -> bool:
        return (abs(p.x - self.center.x) <= self.half_width
                and abs(p.y - self.center.y) <= self.half_height)

    def shrink(self, margin: float) -> Rect:
        return Rect(self.center, self.half_width - margin, self.half_height - margin)


def _rotate(v: Vec2, theta: float) -> Vec2:
    r = math.radians(theta)
    c, s = math.cos(r), math.sin(r)
    return Vec2(c * v.x - s * v.y, s * v.x + c * v.y)


def rotate_about(p: Vec2, anchor: Vec2, theta: float) -> Vec2:
    """Rotate point ``p`` about ``anchor`` by ``theta`` degrees (CCW)."""
    if not (p.is_finite() and anchor.is_finite() and math.isfinite(theta)):
        raise ValueError("rotate_about requires finite inputs")
    return anchor + _rotate(p - anchor, theta)


@dataclass(frozen=True, slots=True)
class RigidTransform2:
    """``x -> R(rotation) x + translation``."""

    rotation: float = 0.0
    translation: Vec2 = ORIGIN

    def __post_init__(self) -> None:
        object.__setattr__(self, "rotation", wrap_angle(self.rotation))

    def apply(self, p: Vec2) -> Vec2:
        return _rotate(p, self.rotation) + self.translation

    def apply_pose(self, pose: Pose2) -> Pose2:
        return Pose2(self.apply(pose.position), pose.heading + self.rotation)

    def rotate_vector(self, v: Vec2) -> Vec2:
        return _rotate(v, self.rotation)

    def inverse(self) -> RigidTransform2:
        return RigidTransform2(-self.rotation, -_rotate(self.translation, -self.rotation))

    @classmethod
    def rotation_about(cls, anchor: Vec2, theta: float) -> RigidTransform2:
        return cls(theta, anchor - _rotate(anchor, theta))

    @classmethod
    def aligning(cls, src: Pose2, dst: Pose2) -> RigidTransform2:
        """Transform taking pose ``src`` onto pose ``dst``."""
        rot = dst.heading - src.heading
        return cls(rot, dst.position - _rotate(src.position, rot))


IDENTITY = RigidTransform2()


def compose(t1: RigidTransform2, t2: RigidTransform2) -> RigidTransform2:
    """``compose(t1, t2)(p) == t1(t2(p))``."""
    return RigidTransform2(t1.rotation + t2.rotation, t1.apply(t2.translation))


def inverse(t: RigidTransform2) -> RigidTransform2:
    return t.inverse()


def polyline_length(points: list[Vec2]) -> float:
    return sum((b - a).norm() for a, b in zip(points, points[1:]))
