"""Deterministic simulated participant: a path-following walker and a gaze model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, RigidTransform2, Vec2, wrap_angle
from .suppression import GazeSample


@dataclass(frozen=True)
class WalkerConfig:
    speed: float = 0.08          # m/s, time-averaged progress while playing
    heading_gain: float = 4.0    # 1/s
    waypoint_radius: float = 0.3  # m

    def __post_init__(self) -> None:
        if not self.speed > 0 or not self.heading_gain > 0:
            raise ValueError("walker speed and heading_gain must be positive")
        if self.waypoint_radius < 0:
            raise ValueError("waypoint_radius must be non-negative")


@dataclass(frozen=True)
class GazeModelConfig:
    blink_rate: float = 17.0                     # per minute
    blink_duration: tuple[float, float] = (100.0, 400.0)    # ms, uniform
    fixation_duration: tuple[float, float] = (200.0, 800.0)  # ms, uniform
    saccade_duration: tuple[float, float] = (20.0, 60.0)     # ms, uniform
    saccade_peak_velocity: float = 600.0          # deg/s
    sample_rate: float = 120.0                    # Hz
    fixation_jitter: float = 0.05                 # deg, per-axis SD
    yaw_limit: float = 40.0
    pitch_limit: float = 25.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "blink_duration", tuple(self.blink_duration))
        object.__setattr__(self, "fixation_duration", tuple(self.fixation_duration))
        object.__setattr__(self, "saccade_duration", tuple(self.saccade_duration))
        if self.blink_rate < 0 or not self.sample_rate > 0:
            raise ValueError("blink_rate must be >= 0 and sample_rate > 0")
        if not 0 < self.saccade_peak_velocity <= 900.0:
            raise ValueError("saccade_peak_velocity must lie in (0, 900] deg/s")
        if self.blink_rate > 0 and self.mean_blink_gap <= 0:
            raise ValueError("blink_rate too high for the blink durations")

    @property
    def sample_period(self) -> float:
        return 1000.0 / self.sample_rate

    @property
    def mean_blink_gap(self) -> float:
        """Mean eyes-open gap (ms) so that blinks start ``blink_rate`` times a minute."""
        lo, hi = self.blink_duration
        return 60000.0 / self.blink_rate - (lo + hi) / 2.0


@dataclass(frozen=True)
class VirtualPath:
    waypoints: tuple[Vec2, ...]

    def __post_init__(self) -> None:
        pts = tuple(p if isinstance(p, Vec2) else Vec2(*p) for p in self.waypoints)
        object.__setattr__(self, "waypoints", pts)
        if len(pts) < 2:
            raise ValueError("a path needs at least two waypoints")
        for a, b in zip(pts, pts[1:]):
            if a == b:
                raise ValueError(f"consecutive waypoints coincide at {a}")

    @classmethod
    def straight(cls, length: float) -> VirtualPath:
        if not length > 0:
            raise ValueError("path length must be positive")
        return cls((Vec2(0.0, 0.0), Vec2(length, 0.0)))

    @property
    def length(self) -> float:
        return sum((b - a).norm() for a, b in zip(self.waypoints, self.waypoints[1:]))

    def start_pose(self) -> Pose2:
        a, b = self.waypoints[:2]
        return Pose2(a, (b - a).bearing())


# --- walker -----------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class WalkerStep:
    heading_change: float    # deg, applied in both frames
    virtual_disp: Vec2
    physical_disp: Vec2
    done: bool


class Walker:
    """Follows a virtual path; its physical motion is the pull-back through the mapping."""

    def __init__(self, path: VirtualPath, cfg: WalkerConfig | None = None):
        self.path = path
        self.cfg = cfg or WalkerConfig()
        self.index = 1
        self.done = False

    def _passed(self, x: float, y: float, i: int) -> bool:
        a, b = self.path.waypoints[i - 1], self.path.waypoints[i]
        return (x - b.x) * (b.x - a.x) + (y - b.y) * (b.y - a.y) >= 0.0

    def _advance(self, x: float, y: float) -> None:
        wps = self.path.waypoints
        r = self.cfg.waypoint_radius
        while self.index < len(wps):
            wp = wps[self.index]
            last = self.index == len(wps) - 1
            close = math.hypot(wp.x - x, wp.y - y) <= r
            if self._passed(x, y, self.index) or (close and not last):
                self.index += 1
            else:
                return
        self.done = True

    @property
    def target(self) -> Vec2:
        return self.path.waypoints[min(self.index, len(self.path.waypoints) - 1)]

    def step(self, virtual: Pose2, mapping: RigidTransform2, dt: float) -> WalkerStep:
        """Advance ``dt`` seconds. The episode is complete once the final waypoint is passed."""
        turn, dvx, dvy, dpx, dpy, done = self.advance(
            virtual.position.x, virtual.position.y, virtual.heading, mapping.rotation, dt)
        return WalkerStep(turn, Vec2(dvx, dvy), Vec2(dpx, dpy), done)

    def advance(self, x: float, y: float, heading: float, rotation: float,
                dt: float) -> tuple[float, float, float, float, float, bool]:
        """Scalar step: (turn, virtual dx, dy, physical dx, dy, done).

        ``rotation`` is the physical-to-virtual rotation of the current mapping.
        """
        if not dt > 0:
            raise ValueError("dt must be positive")
        if self.done:
            return 0.0, 0.0, 0.0, 0.0, 0.0, True
        tgt = self.path.waypoints[self.index]
        err = math.degrees(math.atan2(tgt.y - y, tgt.x - x)) - heading
        if not -180.0 < err <= 180.0:
            err = wrap_angle(err)
        turn = err * min(1.0, self.cfg.heading_gain * dt)
        dist = self.cfg.speed * dt
        hv = math.radians(heading + turn)
        dvx, dvy = math.cos(hv) * dist, math.sin(hv) * dist
        # pull the virtual displacement back through the mapping's rotation
        hp = hv - math.radians(rotation)
        self._advance(x + dvx, y + dvy)
        return turn, dvx, dvy, math.cos(hp) * dist, math.sin(hp) * dist, self.done


def step_walker(walker: Walker, virtual: Pose2, mapping: RigidTransform2, dt: float) -> WalkerStep:
    return walker.step(virtual, mapping, dt)


# --- gaze -------------------------------------------------------------------

class GazeGenerator:
    """Fixation/saccade gaze with an independent blink process.

    Fixations hold a point with sub-degree jitter; saccades move at constant
    speed to the next fixation. Blinks alternate with exponential open-eye
    gaps so they start ``blink_rate`` times per minute on average.
    Ground-truth intervals are kept in ``saccades`` and ``blinks``.
    """

    _JITTER_BLOCK = 4096

    def __init__(self, cfg: GazeModelConfig | None = None,
                 seed: int | np.random.SeedSequence | None = None):
        self.cfg = cfg or GazeModelConfig()
        if seed is None:
            seed = self.cfg.seed
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        ev_seq, blink_seq, jitter_seq = ss.spawn(3)
        self._ev = np.random.default_rng(ev_seq)
        self._blink_rng = np.random.default_rng(blink_seq)
        self._jit_rng = np.random.default_rng(jitter_seq)
        self._jitter = np.empty((0, 2))
        self._jit_i = 0

        self.k = 0
        self.saccades: list[tuple[float, float]] = []
        self.blinks: list[tuple[float, float]] = []
        self._center = (0.0, 0.0)
        self._sac_from = (0.0, 0.0)
        self._sac_start = math.inf
        self._sac_end = -math.inf
        self._landing_pending = False
        self._schedule_saccade(self._ev.uniform(*self.cfg.fixation_duration))
        self._blink_start = math.inf
        self._blink_end = math.inf  # never reached when blinks are disabled
        if self.cfg.blink_rate > 0:
            self._schedule_blink(0.0)

    def _schedule_saccade(self, start: float) -> None:
        c = self.cfg
        dur = self._ev.uniform(*c.saccade_duration)
        amp = c.saccade_peak_velocity * dur / 1000.0
        y0, p0 = self._center
        for _ in range(16):
            phi = self._ev.uniform(-math.pi, math.pi)
            y1, p1 = y0 + amp * math.cos(phi), p0 + amp * math.sin(phi)
            if abs(y1) <= c.yaw_limit and abs(p1) <= c.pitch_limit:
                break
        else:
            norm = math.hypot(y0, p0) or 1.0
            y1, p1 = y0 - amp * y0 / norm, p0 - amp * p0 / norm
        self._sac_from = self._center
        self._center = (y1, p1)
        self._sac_start, self._sac_end = start, start + dur
        self.saccades.append((start, start + dur))

    def _schedule_blink(self, after: float) -> None:
        start = after + self._blink_rng.exponential(self.cfg.mean_blink_gap)
        self._blink_start = start
        self._blink_end = start + self._blink_rng.uniform(*self.cfg.blink_duration)
        self.blinks.append((self._blink_start, self._blink_end))

    def _next_jitter(self) -> tuple[float, float]:
        if self._jit_i >= len(self._jitter):
            sd = self.cfg.fixation_jitter
            self._jitter = np.clip(self._jit_rng.normal(0.0, sd, size=(self._JITTER_BLOCK, 2)),
                                   -6 * sd, 6 * sd)
            self._jit_i = 0
        j = self._jitter[self._jit_i]
        self._jit_i += 1
        return float(j[0]), float(j[1])

    def next_sample(self) -> tuple[GazeSample, bool]:
        """Return the next sample and whether it is the first of a new fixation."""
        t = self.k * self.cfg.sample_period
        self.k += 1
        while t >= self._sac_end:
            self._landing_pending = True
            self._schedule_saccade(self._sac_end + self._ev.uniform(*self.cfg.fixation_duration))
        while t >= self._blink_end:
            self._schedule_blink(self._blink_end)

        if self._sac_start <= t:
            f = (t - self._sac_start) / (self._sac_end - self._sac_start)
            (y0, p0), (y1, p1) = self._sac_from, self._center
            yaw, pitch = y0 + f * (y1 - y0), p0 + f * (p1 - p0)
            onset = False
        else:
            jy, jp = self._next_jitter()
            yaw, pitch = self._center[0] + jy, self._center[1] + jp
            onset = self._landing_pending
            self._landing_pending = False
        openness = 0.0 if self._blink_start <= t < self._blink_end else 1.0
        return GazeSample(t, yaw, pitch, openness), onset


def gen_gaze(gen: GazeGenerator, duration_ms: float) -> list[GazeSample]:
    """Samples covering the next ``duration_ms`` of the stream."""
    if not duration_ms > 0:
        raise ValueError("duration must be positive")
    n = max(1, round(duration_ms / gen.cfg.sample_period))
    return [gen.next_sample()[0] for _ in range(n)]


def spawn_target(virtual: Pose2, fov: float, rng: np.random.Generator,
                 min_range: float = 3.0, max_range: float = 15.0) -> Vec2:
    """Random point inside the user's horizontal field of view."""
    if not 0 < fov <= 360:
        raise ValueError("fov must lie in (0, 360]")
    bearing = virtual.heading + rng.uniform(-fov / 2.0, fov / 2.0)
    return virtual.position + Vec2.unit(bearing) * rng.uniform(min_range, max_range)
