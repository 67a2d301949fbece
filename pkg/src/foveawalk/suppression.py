"""Blink and saccade detection on eye-tracker streams.

Detection is causal: :class:`StreamingDetector` consumes one sample at a
time so the simulator can gate redirection on suppression windows while an
event is still in progress. The batch functions replay a stream through the
same detector.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

SACCADE_MIN_MS = 20.0
SACCADE_MAX_MS = 200.0
BLINK_MIN_MS = 100.0
BLINK_MAX_MS = 400.0

# absorbs float error in timestamp differences (ms)
_EPS = 1e-6


class EventKind(str, Enum):
    BLINK = "blink"
    SACCADE = "saccade"


@dataclass(frozen=True, slots=True)
class GazeSample:
    t: float          # ms
    yaw: float        # deg, head-relative
    pitch: float      # deg, head-relative
    openness: float = 1.0


@dataclass(frozen=True, slots=True)
class SuppressionEvent:
    kind: EventKind
    t_start: float
    t_end: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class DetectorConfig:
    saccade_velocity_threshold: float = 180.0  # deg/s
    blink_openness_threshold: float = 0.1
    pre_margin: float = 10.0   # ms
    post_margin: float = 10.0  # ms

    def __post_init__(self) -> None:
        if self.saccade_velocity_threshold <= 0 or self.blink_openness_threshold <= 0:
            raise ValueError("detector thresholds must be positive")
        if self.pre_margin < 0 or self.post_margin < 0:
            raise ValueError("margins must be non-negative")


def angular_velocity(s0: GazeSample, s1: GazeSample) -> float:
    """Small-angle gaze speed between two samples, deg/s."""
    dt = s1.t - s0.t
    if not dt > 0:
        raise ValueError(f"timestamps must increase ({s0.t} -> {s1.t})")
    return math.hypot(s1.yaw - s0.yaw, s1.pitch - s0.pitch) / dt * 1000.0


def _clamped(kind: EventKind, start: float, end: float) -> SuppressionEvent | None:
    lo, hi = (SACCADE_MIN_MS, SACCADE_MAX_MS) if kind is EventKind.SACCADE else (BLINK_MIN_MS, BLINK_MAX_MS)
    dur = end - start
    if dur < lo - _EPS:
        return None
    if dur > hi:
        end = start + hi
    return SuppressionEvent(kind, start, end)


class StreamingDetector:
    """Incremental saccade/blink detector.

    A saccade run is a maximal sequence of consecutive sample pairs whose
    speed exceeds the threshold; pairs touching a closed-eye sample are
    ignored. A blink run spans the samples with openness below threshold and
    ends at the first re-opened sample.
    """

    def __init__(self, cfg: DetectorConfig | None = None):
        self.cfg = cfg or DetectorConfig()
        self._prev: GazeSample | None = None
        self._sac_start: float | None = None
        self._sac_end: float | None = None
        self._blink_start: float | None = None
        self._blink_last: float | None = None
        self.events: list[SuppressionEvent] = []
        self._recent: deque[tuple[float, SuppressionEvent]] = deque(maxlen=16)

    def push(self, s: GazeSample) -> list[SuppressionEvent]:
        """Consume one sample; return events that closed on it."""
        prev = self._prev
        if prev is not None and not s.t > prev.t:
            raise ValueError(f"timestamps must increase ({prev.t} -> {s.t})")
        closed: list[SuppressionEvent] = []
        thr_open = self.cfg.blink_openness_threshold
        is_closed = s.openness < thr_open

        if is_closed:
            if self._blink_start is None:
                self._blink_start = s.t
            self._blink_last = s.t
        elif self._blink_start is not None:
            ev = _clamped(EventKind.BLINK, self._blink_start, s.t)
            self._blink_start = self._blink_last = None
            if ev is not None:
                closed.append(ev)

        if prev is not None:
            fast = (not is_closed and prev.openness >= thr_open
                    and angular_velocity(prev, s) > self.cfg.saccade_velocity_threshold)
            if fast:
                if self._sac_start is None:
                    self._sac_start = prev.t
                self._sac_end = s.t
            elif self._sac_start is not None:
                ev = _clamped(EventKind.SACCADE, self._sac_start, self._sac_end)
                self._sac_start = self._sac_end = None
                if ev is not None:
                    closed.append(ev)

        self._prev = s
        closed.sort(key=lambda e: e.t_start)
        self.events.extend(closed)
        for ev in closed:
            self._recent.append((s.t, ev))
        return closed

    def flush(self) -> list[SuppressionEvent]:
        """Close runs still open at the end of the stream."""
        closed = []
        if self._sac_start is not None:
            ev = _clamped(EventKind.SACCADE, self._sac_start, self._sac_end)
            if ev is not None:
                closed.append(ev)
        if self._blink_start is not None and self._prev is not None:
            ev = _clamped(EventKind.BLINK, self._blink_start, self._prev.t)
            if ev is not None:
                closed.append(ev)
        self._sac_start = self._sac_end = self._blink_start = self._blink_last = None
        closed.sort(key=lambda e: e.t_start)
        self.events.extend(closed)
        return closed

    def active_windows(self, now: float) -> list[tuple[float, float]]:
        """Margin-expanded suppression windows containing ``now``.

        Runs still in progress count once they reach the event's minimum
        duration, so a commit can land inside the suppression itself.
        """
        pre, post = self.cfg.pre_margin, self.cfg.post_margin
        if (self._sac_start is None and self._blink_start is None
                and (not self._recent or self._recent[-1][0] + post < now)):
            return []
        out = []
        if self._sac_start is not None and self._sac_end - self._sac_start >= SACCADE_MIN_MS - _EPS:
            lo = self._sac_start - pre
            hi = min(self._sac_end, self._sac_start + SACCADE_MAX_MS) + post
            if lo <= now <= hi:
                out.append((lo, hi))
        if self._blink_start is not None and self._blink_last - self._blink_start >= BLINK_MIN_MS - _EPS:
            lo = self._blink_start - pre
            hi = min(self._blink_last, self._blink_start + BLINK_MAX_MS) + post
            if lo <= now <= hi:
                out.append((lo, hi))
        for closed_at, ev in reversed(self._recent):
            if closed_at + post < now:
                break  # everything older closed earlier still
            lo, hi = ev.t_start - pre, ev.t_end + post
            if lo <= now <= hi:
                out.append((lo, hi))
        out.sort()
        return out


def _run(stream: Iterable[GazeSample], cfg: DetectorConfig | None) -> list[SuppressionEvent]:
    det = StreamingDetector(cfg)
    for s in stream:
        det.push(s)
    det.flush()
    return sorted(det.events, key=lambda e: (e.t_start, e.kind.value))


def detect_saccades(stream: Iterable[GazeSample], cfg: DetectorConfig | None = None) -> list[SuppressionEvent]:
    return [e for e in _run(stream, cfg) if e.kind is EventKind.SACCADE]


def detect_blinks(stream: Iterable[GazeSample], cfg: DetectorConfig | None = None) -> list[SuppressionEvent]:
    return [e for e in _run(stream, cfg) if e.kind is EventKind.BLINK]


def detect_events(stream: Iterable[GazeSample], cfg: DetectorConfig | None = None) -> list[SuppressionEvent]:
    return _run(stream, cfg)


def suppression_windows(events: Sequence[SuppressionEvent],
                        cfg: DetectorConfig | None = None) -> list[tuple[float, float]]:
    """Margin-expanded, merged, sorted suppression intervals."""
    cfg = cfg or DetectorConfig()
    spans = sorted((e.t_start - cfg.pre_margin, e.t_end + cfg.post_margin) for e in events)
    merged: list[tuple[float, float]] = []
    for lo, hi in spans:
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


# --- CSV I/O ----------------------------------------------------------------

GAZE_HEADER = ["t_ms", "yaw_deg", "pitch_deg", "openness"]
EVENT_HEADER = ["kind", "t_start_ms", "t_end_ms"]


class StreamFormatError(ValueError):
    def __init__(self, path, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.line = line


def read_gaze_csv(path) -> list[GazeSample]:
    samples: list[GazeSample] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != GAZE_HEADER:
            raise StreamFormatError(path, 1, f"expected header {','.join(GAZE_HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 4:
                raise StreamFormatError(path, line, f"expected 4 fields, got {len(row)}")
            try:
                t, yaw, pitch, op = (float(v) for v in row)
            except ValueError as exc:
                raise StreamFormatError(path, line, str(exc)) from None
            if not all(math.isfinite(v) for v in (t, yaw, pitch, op)):
                raise StreamFormatError(path, line, "non-finite value")
            if not 0.0 <= op <= 1.0:
                raise StreamFormatError(path, line, f"openness {op} outside [0, 1]")
            if samples and not t > samples[-1].t:
                raise StreamFormatError(path, line, "timestamps must strictly increase")
            samples.append(GazeSample(t, yaw, pitch, op))
    return samples


def write_gaze_csv(path, samples: Iterable[GazeSample]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GAZE_HEADER)
        for s in samples:
            w.writerow([repr(s.t), repr(s.yaw), repr(s.pitch), repr(s.openness)])


def write_events_csv(path, events: Iterable[SuppressionEvent]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_HEADER)
        for e in events:
            w.writerow([e.kind.value, repr(e.t_start), repr(e.t_end)])


def read_events_csv(path) -> list[SuppressionEvent]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [SuppressionEvent(EventKind(k), float(a), float(b)) for k, a, b in rows[1:]]


__all__ = [
    "BLINK_MAX_MS", "BLINK_MIN_MS", "SACCADE_MAX_MS", "SACCADE_MIN_MS",
    "DetectorConfig", "EventKind", "GazeSample", "StreamingDetector", "SuppressionEvent",
    "angular_velocity", "detect_blinks", "detect_events", "detect_saccades",
    "read_events_csv", "read_gaze_csv", "suppression_windows", "write_events_csv",
    "write_gaze_csv", "StreamFormatError",
]
