"""CPU reference for foveal/transition/peripheral zone compositing.

Two renders of the same frame are blended per pixel: the foveal camera
(no VE rotation) and the non-foveal camera (VE rotated by the pending
redirection). Sampling-rate reduction is emulated with square block
replication so the result can be checked without a GPU.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

Image = np.ndarray  # (height, width, 3) uint8

SUPPORTED_RATIOS = (1, 4, 16)


class Zone(IntEnum):
    PERIPHERAL = 0
    TRANSITION = 1
    FOVEAL = 2


# PGM debug levels per zone
ZONE_LEVELS = {Zone.FOVEAL: 255, Zone.TRANSITION: 128, Zone.PERIPHERAL: 0}


@dataclass(frozen=True)
class Sampling:
    foveal: int = 1
    transition: int = 4
    peripheral: int = 16


@dataclass(frozen=True)
class FoveationConfig:
    delta_foveal: float = 60.0
    transition_offset: float = 40.0
    total_fov: float = 110.0
    sampling: Sampling = field(default_factory=Sampling)

    def __post_init__(self) -> None:
        if not 0 < self.delta_foveal <= self.total_fov:
            raise ValueError(
                f"delta_foveal must lie in (0, total_fov={self.total_fov}], got {self.delta_foveal}")
        if self.transition_offset < 0:
            raise ValueError("transition_offset must be non-negative")
        if self.delta_foveal + self.transition_offset > 2 * self.total_fov:
            raise ValueError("delta_foveal + transition_offset exceeds 2 * total_fov")
        for r in (self.sampling.foveal, self.sampling.transition, self.sampling.peripheral):
            _block_edge(r)

    @property
    def delta_transition(self) -> float:
        """Outer transition FOV, clamped to the display FOV."""
        return min(self.delta_foveal + self.transition_offset, self.total_fov)

    @property
    def foveal_radius(self) -> float:
        return self.delta_foveal / 2.0

    @property
    def transition_radius(self) -> float:
        return self.delta_transition / 2.0

    @property
    def full_cover(self) -> bool:
        return self.delta_foveal >= self.total_fov


@dataclass(frozen=True)
class ZoneMask:
    zone: np.ndarray   # (h, w) uint8 holding Zone values
    alpha: np.ndarray  # (h, w) float64 foveal weight

    @property
    def width(self) -> int:
        return self.zone.shape[1]

    @property
    def height(self) -> int:
        return self.zone.shape[0]

    @property
    def beta(self) -> np.ndarray:
        return 1.0 - self.alpha

    def counts(self) -> dict[str, int]:
        return {z.name.lower(): int(np.count_nonzero(self.zone == z)) for z in Zone}

    def to_levels(self) -> np.ndarray:
        out = np.zeros(self.zone.shape, dtype=np.uint8)
        for z, level in ZONE_LEVELS.items():
            out[self.zone == z] = level
        return out


def _block_edge(ratio: int) -> int:
    if ratio not in SUPPORTED_RATIOS:
        raise ValueError(f"unsupported sampling ratio {ratio}:1 (expected one of {SUPPORTED_RATIOS})")
    return math.isqrt(ratio)


def _check_gaze(gaze: tuple[float, float], dims: tuple[int, int]) -> None:
    w, h = dims
    if w <= 0 or h <= 0:
        raise ValueError(f"image must be non-empty, got {w}x{h}")
    gx, gy = gaze
    if not (0 <= gx <= w - 1 and 0 <= gy <= h - 1):
        raise ValueError(f"gaze {gaze} lies outside the {w}x{h} image")


def degrees_per_pixel(cfg: FoveationConfig, width: int) -> float:
    return cfg.total_fov / width


def angular_distance(pixel: tuple[float, float], gaze: tuple[float, float],
                     cfg: FoveationConfig, dims: tuple[int, int]) -> float:
    """Angle (degrees) between a pixel and the gaze point.

    Uses a linear pixel-to-angle map of ``total_fov / width`` degrees per pixel.
    """
    _check_gaze(gaze, dims)
    return math.hypot(pixel[0] - gaze[0], pixel[1] - gaze[1]) * degrees_per_pixel(cfg, dims[0])


def alpha_weight(r, cfg: FoveationConfig):
    """Foveal blend weight at angular distance ``r`` from the gaze.

    1 inside the foveal radius, 0 beyond the transition radius, linear in
    between. Accepts scalars or arrays.
    """
    lo, hi = cfg.foveal_radius, cfg.transition_radius
    r_arr = np.asarray(r, dtype=np.float64)
    if np.any(r_arr < 0):
        raise ValueError("angular distance must be non-negative")
    if hi <= lo:
        a = np.where(r_arr <= lo, 1.0, 0.0)
    else:
        a = np.clip((hi - r_arr) / (hi - lo), 0.0, 1.0)
    return float(a) if a.ndim == 0 else a


def build_mask(gaze: tuple[float, float], dims: tuple[int, int], cfg: FoveationConfig) -> ZoneMask:
    w, h = dims
    _check_gaze(gaze, dims)
    ys, xs = np.mgrid[0:h, 0:w]
    if cfg.full_cover:
        # a foveal FOV spanning the whole display leaves no non-foveal pixels
        return ZoneMask(zone=np.full((h, w), Zone.FOVEAL, dtype=np.uint8),
                        alpha=np.ones((h, w)))
    r = np.hypot(xs - gaze[0], ys - gaze[1]) * degrees_per_pixel(cfg, w)
    zone = np.full((h, w), Zone.TRANSITION, dtype=np.uint8)
    zone[r >= cfg.transition_radius] = Zone.PERIPHERAL
    zone[r <= cfg.foveal_radius] = Zone.FOVEAL
    return ZoneMask(zone=zone, alpha=alpha_weight(r, cfg))


def block_sample(img: Image, ratio: int) -> Image:
    """Emulate N:1 shading: each sqrt(N) x sqrt(N) block takes its top-left pixel."""
    edge = _block_edge(ratio)
    if edge == 1:
        return img.copy()
    h, w = img.shape[:2]
    rows = (np.arange(h) // edge) * edge
    cols = (np.arange(w) // edge) * edge
    return img[rows[:, None], cols[None, :]]


def composite(foveal: Image, nonfoveal: Image, mask: ZoneMask, cfg: FoveationConfig) -> Image:
    if foveal.shape != nonfoveal.shape:
        raise ValueError(f"image size mismatch: {foveal.shape} vs {nonfoveal.shape}")
    if foveal.shape[:2] != mask.zone.shape:
        raise ValueError(f"mask size {mask.zone.shape} does not match image {foveal.shape[:2]}")
    s = cfg.sampling
    fov_trans = block_sample(foveal, s.transition)
    non_trans = block_sample(nonfoveal, s.transition)
    non_peri = block_sample(nonfoveal, s.peripheral)

    zone = mask.zone[..., None]
    f_src = np.where(zone == Zone.TRANSITION, fov_trans, block_sample(foveal, s.foveal))
    n_src = np.where(zone == Zone.TRANSITION, non_trans, non_peri)
    a = mask.alpha[..., None]
    blended = a * f_src.astype(np.float64) + (1.0 - a) * n_src.astype(np.float64)
    return np.clip(np.floor(blended + 0.5), 0, 255).astype(np.uint8)


def zone_fractions(cfg: FoveationConfig) -> dict[str, float]:
    """Linear angular share of the display FOV covered by each zone."""
    foveal = cfg.delta_foveal / cfg.total_fov
    transition = (cfg.delta_transition - cfg.delta_foveal) / cfg.total_fov
    return {"foveal": foveal, "transition": transition,
            "peripheral": 1.0 - foveal - transition}


# --- netpbm I/O -------------------------------------------------------------

def _read_header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        if j == i:
            raise ValueError("truncated netpbm header")
        tokens.append(data[i:j])
        i = j
    return tokens, i + 1  # single whitespace byte before raster


def _read_netpbm(path: Path, magic: bytes, channels: int) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, offset = _read_header_tokens(data, 4)
    if tokens[0] != magic:
        raise ValueError(f"{path}: expected {magic.decode()} file, found {tokens[0][:2]!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported")
    n = w * h * channels
    raster = np.frombuffer(data, dtype=np.uint8, count=n, offset=offset) if len(data) - offset >= n else None
    if raster is None:
        raise ValueError(f"{path}: raster shorter than {w}x{h}")
    shape = (h, w, channels) if channels > 1 else (h, w)
    return raster.reshape(shape).copy()


def read_ppm(path) -> Image:
    return _read_netpbm(path, b"P6", 3)


def read_pgm(path) -> np.ndarray:
    return _read_netpbm(path, b"P5", 1)


def write_ppm(path, img: Image) -> None:
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("PPM output needs an (h, w, 3) uint8 array")
    h, w = img.shape[:2]
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + img.tobytes())


def write_pgm(path, img: np.ndarray) -> None:
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("PGM output needs an (h, w) uint8 array")
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())
