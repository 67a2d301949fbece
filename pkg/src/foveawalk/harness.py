"""Episode orchestration, scenarios, metrics and exports."""
from __future__ import annotations

import csv
import dataclasses
import gc
import json
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

import numpy as np

from . import controller as ctl
from .controller import ControllerConfig, RedirectionState, ResetPolicy
from .geometry import Pose2, Rect, RigidTransform2, Vec2, signed_heading_error, wrap_angle
from .simuser import GazeGenerator, GazeModelConfig, VirtualPath, Walker, WalkerConfig
from .suppression import DetectorConfig, StreamingDetector

TICK_MS = 1000.0 / 120.0


class Condition(str, Enum):
    REDIRECTED = "redirected"
    BASELINE = "baseline"


@dataclass(frozen=True)
class StraightWalk:
    length: float = 42.0

    def __post_init__(self) -> None:
        if not self.length > 0:
            raise ValueError("StraightWalk length must be positive")


@dataclass(frozen=True)
class InSitu:
    baseline_s: float = 30.0
    rotation_s: float = 30.0
    rate: float = 6.0  # deg/s

    def __post_init__(self) -> None:
        if self.baseline_s < 0 or not self.rotation_s > 0:
            raise ValueError("InSitu needs baseline_s >= 0 and rotation_s > 0")


@dataclass(frozen=True)
class PathFile:
    path: str


Scenario = Union[StraightWalk, InSitu, PathFile]


@dataclass(frozen=True)
class EpisodeConfig:
    seed: int = 0
    condition: Condition = Condition.REDIRECTED
    scenario: Scenario = field(default_factory=StraightWalk)
    pts: Rect = field(default_factory=lambda: Rect.square(4.0))
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    walker: WalkerConfig = field(default_factory=WalkerConfig)
    gaze: GazeModelConfig = field(default_factory=GazeModelConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    dt: float = TICK_MS                   # ms
    max_duration_s: float = 1800.0
    reset_duration_s: float = 2.0
    initial_heading: float | None = None  # physical; drawn from the seed when None

    def __post_init__(self) -> None:
        object.__setattr__(self, "condition", Condition(self.condition))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.max_duration_s > 0 or self.reset_duration_s < 0:
            raise ValueError("max_duration_s must be positive and reset_duration_s >= 0")

    def with_seed(self, seed: int) -> EpisodeConfig:
        return dataclasses.replace(self, seed=seed)


@dataclass(frozen=True, slots=True)
class TraceRecord:
    """One trace row. Poses are stored as scalars; ``physical``/``virtual`` rebuild them."""

    t: float
    px: float
    py: float
    ph: float
    vx: float
    vy: float
    vh: float
    theta_acc: float
    theta_offset: float
    event: str = "none"  # none | commit:<deg> | blink | saccade | reset_begin | reset_end

    @classmethod
    def from_poses(cls, t: float, physical: Pose2, virtual: Pose2, theta_acc: float,
                   theta_offset: float, event: str = "none") -> TraceRecord:
        return cls(t, physical.position.x, physical.position.y, physical.heading,
                   virtual.position.x, virtual.position.y, virtual.heading, theta_acc, theta_offset, event)

    @property
    def physical(self) -> Pose2:
        return Pose2(Vec2(self.px, self.py), self.ph)

    @property
    def virtual(self) -> Pose2:
        return Pose2(Vec2(self.vx, self.vy), self.vh)

    @property
    def commit_delta(self) -> float | None:
        if self.event.startswith("commit:"):
            return float(self.event.split(":", 1)[1])
        return None


@dataclass(frozen=True)
class Metrics:
    resets: int
    distance_pts: float
    distance_ve: float
    total_abs_gain: float
    commits: int
    duration: float
    mean_gain_per_commit: float
    commits_per_second: float


METRIC_NAMES = tuple(f.name for f in dataclasses.fields(Metrics))


@dataclass
class EpisodeResult:
    trace: list[TraceRecord]
    metrics: Metrics
    timed_out: bool
    final_state: RedirectionState


def load_path(path) -> VirtualPath:
    """Waypoints from JSON (``{"waypoints": [[x, y], ...]}`` or a bare list) or CSV ``x,y``."""
    p = Path(path)
    text = p.read_text()
    if p.suffix.lower() == ".json":
        data = json.loads(text)
        pts = data["waypoints"] if isinstance(data, dict) else data
    else:
        rows = [r for r in csv.reader(text.splitlines()) if r]
        if rows and not _is_number(rows[0][0]):
            rows = rows[1:]
        pts = [(float(r[0]), float(r[1])) for r in rows]
    return VirtualPath(tuple(Vec2(float(x), float(y)) for x, y in pts))


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _path_length(xy: np.ndarray) -> float:
    if len(xy) < 2:
        return 0.0
    d = np.diff(xy, axis=0)
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def _xy(trace: Sequence[TraceRecord], frame: str) -> np.ndarray:
    if frame == "physical":
        rows = [(r.px, r.py) for r in trace]
    else:
        rows = [(r.vx, r.vy) for r in trace]
    return np.array(rows, dtype=np.float64).reshape(-1, 2)


def _metrics(trace: Sequence[TraceRecord], st: RedirectionState, duration_s: float) -> Metrics:
    phys, virt = _xy(trace, "physical"), _xy(trace, "virtual")
    commits = st.commits
    return Metrics(
        resets=st.resets,
        distance_pts=_path_length(phys),
        distance_ve=_path_length(virt),
        total_abs_gain=st.total_abs_gain,
        commits=commits,
        duration=duration_s,
        mean_gain_per_commit=st.total_abs_gain / commits if commits else 0.0,
        commits_per_second=commits / duration_s if duration_s > 0 else 0.0,
    )


def _initial_poses(cfg: EpisodeConfig, rng: np.random.Generator, start: Pose2) -> tuple[Pose2, Pose2, RedirectionState]:
    heading = cfg.initial_heading if cfg.initial_heading is not None else float(rng.uniform(-180.0, 180.0))
    physical = Pose2(cfg.pts.center, heading)
    st = RedirectionState(mapping=RigidTransform2.aligning(physical, start), anchor=physical.position)
    return physical, start, st


@contextmanager
def _gc_paused():
    # traces are large and acyclic; generational GC passes only cost time here
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()


def run_episode(cfg: EpisodeConfig) -> EpisodeResult:
    """Run one episode at a fixed tick.

    Per tick: gaze sample -> suppression detection -> steering -> gain
    scheduling and commit -> walker step -> boundary prediction -> reset.
    """
    with _gc_paused():
        return _run_episode(cfg)


def _run_episode(cfg: EpisodeConfig) -> EpisodeResult:
    ss = np.random.SeedSequence(cfg.seed)
    gaze_seq, pose_seq = ss.spawn(2)
    gaze = GazeGenerator(cfg.gaze, seed=gaze_seq)
    rng = np.random.default_rng(pose_seq)
    if isinstance(cfg.scenario, InSitu):
        return _run_in_situ(cfg, gaze, rng)

    path = (VirtualPath.straight(cfg.scenario.length) if isinstance(cfg.scenario, StraightWalk)
            else load_path(cfg.scenario.path))
    walker = Walker(path, cfg.walker)
    physical, virtual, st = _initial_poses(cfg, rng, path.start_pose())
    detector = StreamingDetector(cfg.detector)
    ccfg, pts, speed = cfg.controller, cfg.pts, cfg.walker.speed
    redirect = cfg.condition is Condition.REDIRECTED
    dt, dt_s = cfg.dt, cfg.dt / 1000.0
    period = gaze.cfg.sample_period

    # poses live in scalars inside the loop; Pose2 objects are built only for resets
    px, py, ph = physical.position.x, physical.position.y, physical.heading
    vx, vy, vh = virtual.position.x, virtual.position.y, virtual.heading
    trace: list[TraceRecord] = []
    add = trace.append

    first, _ = gaze.next_sample()
    detector.push(first)
    add(TraceRecord(0.0, px, py, ph, vx, vy, vh, st.theta_acc, st.theta_offset))

    reset_ticks = 0
    armed = True
    max_ticks = math.ceil(cfg.max_duration_s * 1000.0 / dt)
    timed_out = True
    now = 0.0
    for k in range(1, max_ticks + 1):
        now = k * dt
        moved = False
        while gaze.k * period <= now + 1e-9:
            sample, onset = gaze.next_sample()
            moved |= onset
            for ev in detector.push(sample):
                add(TraceRecord(now, px, py, ph, vx, vy, vh, st.theta_acc, st.theta_offset, ev.kind.value))

        if reset_ticks > 0:
            reset_ticks -= 1
            if reset_ticks == 0:
                add(TraceRecord(now, px, py, ph, vx, vy, vh, st.theta_acc, st.theta_offset, "reset_end"))
            add(TraceRecord(now, px, py, ph, vx, vy, vh, st.theta_acc, st.theta_offset))
            continue

        if redirect:
            target, active = ctl.steer_target_xy(px, py, ph, pts)
            requested = -signed_heading_error(ph, target) if active else 0.0
            delta = ctl.schedule_gain(st, requested, now, dt, detector.active_windows(now), moved, ccfg)
            if delta != 0.0:
                ctl.commit_rotation(st, delta, Vec2(px, py), ccfg.per_commit_cap)
                vh = wrap_angle(vh + delta)
                add(TraceRecord(now, px, py, ph, vx, vy, vh, st.theta_acc, st.theta_offset, f"commit:{delta!r}"))

        turn, dvx, dvy, dpx, dpy, done = walker.advance(vx, vy, vh, st.mapping.rotation, dt_s)
        vx, vy, vh = vx + dvx, vy + dvy, wrap_angle(vh + turn)
        px, py, ph = px + dpx, py + dpy, wrap_angle(ph + turn)
        if done:
            add(TraceRecord(now, px, py, ph, vx, vy, vh, st.theta_acc, st.theta_offset))
            timed_out = False
            break

        out = ctl.out_of_bounds_xy(px, py, ph, speed, pts, ccfg)
        if out and armed:
            add(TraceRecord(now, px, py, ph, vx, vy, vh, st.theta_acc, st.theta_offset, "reset_begin"))
            physical, _ = ctl.perform_reset(Pose2(Vec2(px, py), ph), st, pts, ccfg.reset_policy)
            if (ctl.predict_out_of_bounds(physical, speed, pts, ccfg)
                    or ctl.free_run(physical, pts, ccfg.boundary_margin) < ccfg.reset_min_free_run):
                # reoriented straight into another wall (corners); face the center instead
                physical, _ = ctl.perform_reset(physical, st, pts, ResetPolicy.FREEZE_TURN)
                st.resets -= 1
            px, py, ph = physical.position.x, physical.position.y, physical.heading
            armed = False
            reset_ticks = max(1, round(cfg.reset_duration_s * 1000.0 / dt))
        elif not out:
            armed = True
        add(TraceRecord(now, px, py, ph, vx, vy, vh, st.theta_acc, st.theta_offset))

    return EpisodeResult(trace, _metrics(trace, st, now / 1000.0), timed_out, st)


def _run_in_situ(cfg: EpisodeConfig, gaze: GazeGenerator, rng: np.random.Generator) -> EpisodeResult:
    """Standing user; the VE turns at a constant rate after a still baseline.

    Rotation here is continuous and bypasses suppression gating.
    """
    sc: InSitu = cfg.scenario
    physical, virtual, st = _initial_poses(cfg, rng, Pose2(Vec2(0.0, 0.0), 0.0))
    detector = StreamingDetector(cfg.detector)
    trace: list[TraceRecord] = []
    first, _ = gaze.next_sample()
    detector.push(first)
    trace.append(TraceRecord.from_poses(0.0, physical, virtual, st.theta_acc, st.theta_offset))

    dt = cfg.dt
    rot_lo = sc.baseline_s * 1000.0
    rot_hi = rot_lo + sc.rotation_s * 1000.0
    n_ticks = math.ceil(rot_hi / dt - 1e-9)
    redirect = cfg.condition is Condition.REDIRECTED
    now = 0.0
    for k in range(1, n_ticks + 1):
        prev, now = (k - 1) * dt, min(k * dt, rot_hi)
        while gaze.k * gaze.cfg.sample_period <= now + 1e-9:
            sample, _ = gaze.next_sample()
            for ev in detector.push(sample):
                trace.append(TraceRecord.from_poses(now, physical, virtual, st.theta_acc, st.theta_offset,
                                                    ev.kind.value))
        overlap = min(now, rot_hi) - max(prev, rot_lo)
        if redirect and overlap > 0:
            delta = sc.rate * overlap / 1000.0
            ctl.commit_rotation(st, delta, physical.position, cfg.controller.per_commit_cap)
            trace.append(TraceRecord.from_poses(now, physical, Pose2(virtual.position, virtual.heading + delta),
                                                st.theta_acc, st.theta_offset, f"commit:{delta!r}"))
            # the user keeps facing the same virtual direction
            physical = Pose2(physical.position, physical.heading - delta)
        trace.append(TraceRecord.from_poses(now, physical, virtual, st.theta_acc, st.theta_offset))
    return EpisodeResult(trace, _metrics(trace, st, now / 1000.0), False, st)


# --- batches ----------------------------------------------------------------

@dataclass
class BatchSummary:
    """Per-metric mean / population SD / min / max over ``n`` episodes."""

    n: int
    seeds: list[int]
    stats: dict[str, dict[str, float]]
    episodes: list[Metrics]
    timeouts: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "sd": "population",
            "seeds": self.seeds,
            "timeouts": self.timeouts,
            "stats": self.stats,
            "episodes": [dataclasses.asdict(m) for m in self.episodes],
        }


def summarize(metrics: Sequence[Metrics], seeds: Sequence[int] | None = None, timeouts: int = 0) -> BatchSummary:
    if not metrics:
        raise ValueError("cannot summarize an empty batch")
    stats = {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(m, name) for m in metrics], dtype=np.float64)
        stats[name] = {"mean": float(vals.mean()), "sd": float(vals.std(ddof=0)),
                       "min": float(vals.min()), "max": float(vals.max())}
    return BatchSummary(len(metrics), list(seeds or []), stats, list(metrics), timeouts)


def _episode_metrics(cfg: EpisodeConfig) -> tuple[Metrics, bool]:
    res = run_episode(cfg)
    return res.metrics, res.timed_out


def run_batch(base: EpisodeConfig, n: int, seed_stride: int = 1, workers: int = 1) -> BatchSummary:
    """Run ``n`` episodes with seeds ``base.seed + i * seed_stride``.

    Results are aggregated in seed order whatever ``workers`` is.
    """
    if n < 1:
        raise ValueError("batch size must be >= 1")
    seeds = [base.seed + i * seed_stride for i in range(n)]
    cfgs = [base.with_seed(s) for s in seeds]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_episode_metrics, cfgs))
    else:
        results = [_episode_metrics(c) for c in cfgs]
    return summarize([m for m, _ in results], seeds, sum(1 for _, t in results if t))


def welch(mean_a: float, sd_a: float, n_a: int, mean_b: float, sd_b: float, n_b: int) -> tuple[float, float]:
    """Welch t statistic and Welch-Satterthwaite degrees of freedom."""
    if n_a < 2 or n_b < 2:
        raise ValueError("Welch comparison needs at least two episodes per group")
    va, vb = sd_a ** 2 / n_a, sd_b ** 2 / n_b
    diff = mean_a - mean_b
    se2 = va + vb
    if se2 == 0.0:
        return (0.0 if diff == 0 else math.copysign(math.inf, diff)), math.nan
    dof = se2 ** 2 / (va ** 2 / (n_a - 1) + vb ** 2 / (n_b - 1))
    return diff / math.sqrt(se2), dof


def compare_conditions(a: BatchSummary, b: BatchSummary, metric: str = "resets") -> dict[str, float]:
    sa, sb = a.stats[metric], b.stats[metric]
    t, dof = welch(sa["mean"], sa["sd"], a.n, sb["mean"], sb["sd"], b.n)
    return {"metric": metric, "mean_diff": sa["mean"] - sb["mean"], "welch_t": t, "dof": dof}


# --- exports ----------------------------------------------------------------

TRACE_HEADER = ["t_ms", "px", "py", "ph_deg", "vx", "vy", "vh_deg", "theta_acc", "theta_offset", "event"]


def export_trace_csv(trace: Iterable[TraceRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in trace:
            w.writerow([repr(r.t), repr(r.px), repr(r.py), repr(r.ph), repr(r.vx), repr(r.vy), repr(r.vh),
                        repr(r.theta_acc), repr(r.theta_offset), r.event])


def read_trace_csv(path) -> list[TraceRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header")
        out = []
        for row in reader:
            out.append(TraceRecord(*(float(x) for x in row[:9]), row[9]))
    return out


def export_metrics_json(metrics: Metrics, path) -> None:
    Path(path).write_text(json.dumps(dataclasses.asdict(metrics), indent=2) + "\n")


def read_metrics_json(path) -> Metrics:
    return Metrics(**json.loads(Path(path).read_text()))


def render_svg(trace: Sequence[TraceRecord], pts: Rect, path, max_points: int = 2000) -> None:
    """Top-down plot: physical path orange, virtual path blue, tracked space cyan."""
    if not trace:
        raise ValueError("cannot render an empty trace")
    stride = max(1, math.ceil(len(trace) / max_points))
    picks = list(trace[::stride])
    if picks[-1] is not trace[-1]:
        picks.append(trace[-1])
    phys = [Vec2(r.px, r.py) for r in picks]
    virt = [Vec2(r.vx, r.vy) for r in picks]
    corners = [Vec2(pts.center.x + sx * pts.half_width, pts.center.y + sy * pts.half_height)
               for sx in (-1, 1) for sy in (-1, 1)]
    xs = [p.x for p in phys + virt + corners]
    ys = [p.y for p in phys + virt + corners]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    w, h = max(x1 - x0, 1e-6), max(y1 - y0, 1e-6)
    pad = 0.05 * max(w, h)
    vb = (x0 - pad, -(y1 + pad), w + 2 * pad, h + 2 * pad)
    stroke = 0.004 * max(vb[2], vb[3])

    def pl(points: list[Vec2]) -> str:
        return " ".join(f"{p.x:.4f},{-p.y:.4f}" for p in points)

    resets = sum(1 for r in trace if r.event == "reset_begin")
    gain = sum(abs(r.commit_delta) for r in trace if r.commit_delta is not None)
    d_pts = _path_length(_xy(trace, "physical"))
    d_ve = _path_length(_xy(trace, "virtual"))
    font = 0.025 * max(vb[2], vb[3])
    lines = [f"redirection: {gain:.2f} deg", f"distance PTS: {d_pts:.2f} m",
             f"distance VE: {d_ve:.2f} m", f"resets: {resets}"]
    text = "".join(
        f'<text x="{vb[0] + font:.4f}" y="{vb[1] + font * (1.3 * i + 1.5):.4f}" font-size="{font:.4f}" '
        f'font-family="sans-serif">{line}</text>' for i, line in enumerate(lines))
    svg = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="{vb[0]:.4f} {vb[1]:.4f} {vb[2]:.4f} {vb[3]:.4f}">\n'
        f'<rect x="{pts.center.x - pts.half_width:.4f}" y="{-(pts.center.y + pts.half_height):.4f}" '
        f'width="{2 * pts.half_width:.4f}" height="{2 * pts.half_height:.4f}" fill="none" '
        f'stroke="cyan" stroke-width="{stroke:.4f}"/>\n'
        f'<polyline id="virtual" points="{pl(virt)}" fill="none" stroke="blue" stroke-width="{stroke:.4f}"/>\n'
        f'<polyline id="physical" points="{pl(phys)}" fill="none" stroke="orange" stroke-width="{stroke:.4f}"/>\n'
        f'{text}\n</svg>\n'
    )
    Path(path).write_text(svg)


# --- config files -----------------------------------------------------------

def _build(cls, data: dict[str, Any], where: str):
    if not isinstance(data, dict):
        raise ValueError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"{where}: unknown field(s) {sorted(unknown)}")
    return cls(**data)


def _scenario_from(data: dict[str, Any]) -> Scenario:
    data = dict(data)
    kind = data.pop("kind", None)
    kinds = {"straight_walk": StraightWalk, "in_situ": InSitu, "path_file": PathFile}
    if kind not in kinds:
        raise ValueError(f"scenario.kind must be one of {sorted(kinds)}, got {kind!r}")
    return _build(kinds[kind], data, "scenario")


def _scenario_to(sc: Scenario) -> dict[str, Any]:
    kind = {StraightWalk: "straight_walk", InSitu: "in_situ", PathFile: "path_file"}[type(sc)]
    return {"kind": kind, **dataclasses.asdict(sc)}


def _rect_from(data: dict[str, Any]) -> Rect:
    if "side" in data:
        return Rect.square(float(data["side"]), Vec2(*data.get("center", (0.0, 0.0))))
    return Rect(Vec2(*data.get("center", (0.0, 0.0))), float(data["half_width"]), float(data["half_height"]))


def episode_config_from_dict(data: dict[str, Any]) -> EpisodeConfig:
    """Build an :class:`EpisodeConfig` from a JSON-style dict; raises ``ValueError``."""
    data = dict(data)
    try:
        kw: dict[str, Any] = {}
        nested = {"controller": ControllerConfig, "walker": WalkerConfig,
                  "gaze": GazeModelConfig, "detector": DetectorConfig}
        for key, cls in nested.items():
            if key in data:
                kw[key] = _build(cls, data.pop(key), key)
        if "scenario" in data:
            kw["scenario"] = _scenario_from(data.pop("scenario"))
        if "pts" in data:
            kw["pts"] = _rect_from(data.pop("pts"))
        return _build(EpisodeConfig, {**data, **kw}, "config")
    except (TypeError, KeyError) as exc:
        raise ValueError(f"invalid config: {exc}") from None


def episode_config_to_dict(cfg: EpisodeConfig) -> dict[str, Any]:
    def plain(obj):
        d = dataclasses.asdict(obj)
        return {k: (v.value if isinstance(v, Enum) else list(v) if isinstance(v, tuple) else v)
                for k, v in d.items()}

    return {
        "seed": cfg.seed,
        "condition": cfg.condition.value,
        "scenario": _scenario_to(cfg.scenario),
        "pts": {"center": [cfg.pts.center.x, cfg.pts.center.y],
                "half_width": cfg.pts.half_width, "half_height": cfg.pts.half_height},
        "controller": plain(cfg.controller),
        "walker": plain(cfg.walker),
        "gaze": plain(cfg.gaze),
        "detector": plain(cfg.detector),
        "dt": cfg.dt,
        "max_duration_s": cfg.max_duration_s,
        "reset_duration_s": cfg.reset_duration_s,
        "initial_heading": cfg.initial_heading,
    }


def load_episode_config(path) -> EpisodeConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: {exc}") from None
    return episode_config_from_dict(data)
