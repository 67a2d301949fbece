"""Redirection controller.

Steer-to-center picks where the user should be heading physically; the
pending rotation (``theta_offset``) is what the non-foveal camera shows.
Pending rotation only becomes part of the physical->virtual mapping at a
commit, which is allowed during a blink/saccade suppression window or when
the gaze moves and the foveal zone repaints the framebuffer.

Sign convention: committing a VE rotation of +d makes a user who keeps
their virtual heading turn physically by -d.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .geometry import (IDENTITY, Pose2, Rect, RigidTransform2, Vec2, compose,
                       signed_heading_error, wrap_angle)

THETA_MAX = 13.5        # deg, imperceptible rotation of the non-foveal view
DEAD_ZONE = 0.05        # m around the PTS center where steering idles
BACKUP_DISTANCE = 0.5   # m, FreezeBackup step toward the center


class Gating(str, Enum):
    STRICT = "strict"
    SMOOTH_PLUS_SUPPRESSION = "smooth_plus_suppression"


class ResetPolicy(str, Enum):
    TWO_TO_ONE = "two_to_one"
    FREEZE_TURN = "freeze_turn"
    FREEZE_BACKUP = "freeze_backup"


class Steering(str, Enum):
    STEER_TO_CENTER = "steer_to_center"


@dataclass(frozen=True)
class ControllerConfig:
    theta_max: float = THETA_MAX
    smooth_rate: float = 6.0        # deg/s
    per_commit_cap: float = 5.0     # deg
    gating: Gating = Gating.SMOOTH_PLUS_SUPPRESSION
    steering: Steering = Steering.STEER_TO_CENTER
    reset_policy: ResetPolicy = ResetPolicy.TWO_TO_ONE
    boundary_margin: float = 0.2    # m
    prediction_horizon: float = 0.5  # s
    reset_min_free_run: float = 1.0  # m; shorter post-reset runs face the center instead

    def __post_init__(self) -> None:
        object.__setattr__(self, "gating", Gating(self.gating))
        object.__setattr__(self, "steering", Steering(self.steering))
        object.__setattr__(self, "reset_policy", ResetPolicy(self.reset_policy))
        if not 0 < self.per_commit_cap <= self.theta_max:
            raise ValueError("need 0 < per_commit_cap <= theta_max")
        if self.smooth_rate < 0 or self.boundary_margin < 0 or self.prediction_horizon < 0:
            raise ValueError("smooth_rate, boundary_margin and prediction_horizon must be >= 0")


class OutsideTrackedSpace(ValueError):
    """The physical pose left the tracked space; a reset should have fired."""


class CapExceeded(ValueError):
    pass


@dataclass
class RedirectionState:
    mapping: RigidTransform2 = IDENTITY   # physical -> virtual
    theta_acc: float = 0.0                # committed heading offset, wrapped
    theta_offset: float = 0.0             # pending, shown only in the non-foveal view
    anchor: Vec2 = Vec2(0.0, 0.0)
    commits: int = 0
    total_abs_gain: float = 0.0
    resets: int = 0
    last_window: float | None = None      # start of the last window that committed


@dataclass(frozen=True)
class SteerCommand:
    target_heading: float
    active: bool


@dataclass(frozen=True)
class ResetOutcome:
    physical_heading_after: float
    virtual_heading_after: float
    resets_count: int


def steer_to_center(pose: Pose2, pts: Rect) -> SteerCommand:
    target, active = steer_target_xy(pose.position.x, pose.position.y, pose.heading, pts)
    return SteerCommand(target, active)


def steer_target_xy(x: float, y: float, heading: float, pts: Rect) -> tuple[float, bool]:
    """Scalar form of :func:`steer_to_center` for the simulation loop."""
    dx, dy = pts.center.x - x, pts.center.y - y
    if abs(dx) > pts.half_width or abs(dy) > pts.half_height:
        raise OutsideTrackedSpace(f"({x}, {y}) is outside the tracked space")
    if math.hypot(dx, dy) < DEAD_ZONE:
        return heading, False
    return wrap_angle(math.degrees(math.atan2(dy, dx))), True


def required_redirection(pose: Pose2, target_heading: float) -> float:
    """VE rotation that would turn the user's physical heading onto the target."""
    return -signed_heading_error(pose.heading, target_heading)


def schedule_gain(state: RedirectionState, requested: float, now: float, dt: float,
                  windows: Sequence[tuple[float, float]], gaze_moved: bool,
                  cfg: ControllerConfig) -> float:
    """Advance the pending offset one tick and return the rotation to commit.

    ``now`` and ``dt`` are milliseconds. At most one commit lands per
    suppression window; a gaze refresh outside a window commits on its own.
    Under strict gating the pending offset only moves inside those moments.
    A commit never exceeds the current request, so it cannot overshoot.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    window = None
    for w in windows:
        if w[0] <= now <= w[1]:
            window = w
            break
    fresh_window = window is not None and window[0] != state.last_window
    trigger = fresh_window or (gaze_moved and window is None)

    if cfg.gating is Gating.SMOOTH_PLUS_SUPPRESSION or window is not None or gaze_moved:
        lim = cfg.theta_max
        target = lim if requested > lim else (-lim if requested < -lim else requested)
        step = cfg.smooth_rate * dt / 1000.0
        gap = target - state.theta_offset
        state.theta_offset += step if gap > step else (-step if gap < -step else gap)

    if not trigger:
        return 0.0
    if window is not None:
        state.last_window = window[0]
    off = state.theta_offset
    if off * requested <= 0.0:
        return 0.0  # pending rotation lags a sign change; committing would steer away
    delta = math.copysign(min(abs(off), cfg.per_commit_cap, abs(requested)), off)
    state.theta_offset -= delta
    return delta


def commit_rotation(state: RedirectionState, delta: float, user_physical_pos: Vec2,
                    cap: float | None = None) -> RedirectionState:
    """Fold ``delta`` into the mapping as a VE rotation about the user."""
    if cap is not None and abs(delta) > cap + 1e-12:
        raise CapExceeded(f"commit of {delta} deg exceeds cap {cap}")
    if delta != 0.0:
        pivot = state.mapping.apply(user_physical_pos)
        state.mapping = compose(RigidTransform2.rotation_about(pivot, delta), state.mapping)
        state.theta_acc = wrap_angle(state.theta_acc + delta)
    state.anchor = user_physical_pos
    state.commits += 1
    state.total_abs_gain += abs(delta)
    return state


def to_virtual(pose: Pose2, state: RedirectionState, include_view_offset: bool = False) -> Pose2:
    v = state.mapping.apply_pose(pose)
    if include_view_offset:
        return Pose2(v.position, v.heading + state.theta_offset)
    return v


def to_physical(pose: Pose2, state: RedirectionState) -> Pose2:
    return state.mapping.inverse().apply_pose(pose)


def predict_out_of_bounds(pose: Pose2, speed: float, pts: Rect, cfg: ControllerConfig) -> bool:
    if speed < 0:
        raise ValueError("speed must be non-negative")
    return out_of_bounds_xy(pose.position.x, pose.position.y, pose.heading, speed, pts, cfg)


def out_of_bounds_xy(x: float, y: float, heading: float, speed: float, pts: Rect,
                     cfg: ControllerConfig) -> bool:
    reach = speed * cfg.prediction_horizon
    h = math.radians(heading)
    dx = x + math.cos(h) * reach - pts.center.x
    dy = y + math.sin(h) * reach - pts.center.y
    m = cfg.boundary_margin
    return abs(dx) > pts.half_width - m or abs(dy) > pts.half_height - m


def free_run(pose: Pose2, pts: Rect, margin: float = 0.0) -> float:
    """Distance along the heading before leaving ``pts`` shrunk by ``margin``."""
    inner = pts.shrink(margin)
    if not inner.contains(pose.position):
        return 0.0
    h = math.radians(pose.heading)
    ux, uy = math.cos(h), math.sin(h)
    px, py = pose.position.x - inner.center.x, pose.position.y - inner.center.y
    run = math.inf
    if ux:
        run = min(run, ((inner.half_width if ux > 0 else -inner.half_width) - px) / ux)
    if uy:
        run = min(run, ((inner.half_height if uy > 0 else -inner.half_height) - py) / uy)
    return run


def perform_reset(pose: Pose2, state: RedirectionState, pts: Rect,
                  policy: ResetPolicy) -> tuple[Pose2, ResetOutcome]:
    """Reorient the user physically while the virtual pose stays frozen.

    Returns the new physical pose; the mapping is re-solved so the user's
    virtual pose is unchanged.
    """
    policy = ResetPolicy(policy)
    virtual = state.mapping.apply_pose(pose)
    if policy is ResetPolicy.TWO_TO_ONE:
        after = Pose2(pose.position, pose.heading + 180.0)
    elif policy is ResetPolicy.FREEZE_TURN:
        to_center = pts.center - pose.position
        heading = to_center.bearing() if to_center.norm() > 0 else pose.heading + 180.0
        after = Pose2(pose.position, heading)
    elif policy is ResetPolicy.FREEZE_BACKUP:
        to_center = pts.center - pose.position
        dist = to_center.norm()
        step = to_center * (min(BACKUP_DISTANCE, dist) / dist) if dist > 0 else Vec2(0.0, 0.0)
        after = Pose2(pose.position + step, pose.heading)
    else:  # pragma: no cover
        raise ValueError(policy)
    turn = signed_heading_error(pose.heading, after.heading)
    state.mapping = RigidTransform2.aligning(after, virtual)
    state.theta_acc = wrap_angle(state.theta_acc - turn)
    state.resets += 1
    return after, ResetOutcome(after.heading, virtual.heading, state.resets)
