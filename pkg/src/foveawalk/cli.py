"""Command-line entry point: ``foveawalk <subcommand> ...``.

Exit codes: 0 success, 2 usage or config error, 3 simulation timeout.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

from . import foveation as fov
from . import harness as hs
from .controller import THETA_MAX
from .suppression import StreamFormatError, detect_events, read_gaze_csv, write_events_csv

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TIMEOUT = 3


class UsageError(Exception):
    """Raised for bad input; reported on stderr with exit code 2."""


def _json_safe(obj: Any) -> Any:
    # JSON has no inf/nan literals; spell them as strings
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _write_json(path: Path, payload: Any) -> None:
    path.write_text(json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n")


def parse_scenario(text: str) -> hs.Scenario:
    """Parse ``straight:42``, ``insitu:30,30,6`` or ``path:FILE``."""
    kind, _, arg = text.partition(":")
    try:
        if kind == "straight":
            return hs.StraightWalk(float(arg)) if arg else hs.StraightWalk()
        if kind == "insitu":
            if not arg:
                return hs.InSitu()
            vals = [float(v) for v in arg.split(",")]
            if len(vals) != 3:
                raise ValueError("insitu takes baseline_s,rotation_s,rate")
            return hs.InSitu(*vals)
        if kind == "path" and arg:
            return hs.PathFile(arg)
    except ValueError as exc:
        raise UsageError(f"bad scenario {text!r}: {exc}") from None
    raise UsageError(f"bad scenario {text!r}; expected straight:L, insitu:B,R,RATE or path:FILE")


def parse_range(text: str) -> list[float]:
    """Inclusive ``start:stop:step`` grid; stop is kept when it lands on a step."""
    try:
        start, stop, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise UsageError(f"bad range {text!r}; expected start:stop:step") from None
    if step <= 0 or not all(map(math.isfinite, (start, stop, step))):
        raise UsageError(f"bad range {text!r}: step must be positive and finite")
    count = math.floor((stop - start) / step + 1e-9) + 1
    if count < 1:
        raise UsageError(f"empty range {text!r}")
    return [start + i * step for i in range(count)]


def _parse_gaze(text: str) -> tuple[float, float]:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"bad gaze {text!r}; expected X,Y") from None
    return x, y


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _episode_config(args: argparse.Namespace) -> hs.EpisodeConfig:
    if args.config:
        try:
            cfg = hs.load_episode_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        cfg = hs.EpisodeConfig()
    changes: dict[str, Any] = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "condition", None):
        changes["condition"] = hs.Condition(args.condition)
    if getattr(args, "scenario", None):
        changes["scenario"] = parse_scenario(args.scenario)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _episode_config(args)
    try:
        result = hs.run_episode(cfg)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hs.export_trace_csv(result.trace, out / "trace.csv")
    hs.export_metrics_json(result.metrics, out / "metrics.json")
    hs.render_svg(result.trace, cfg.pts, out / "path.svg")
    if result.timed_out:
        print(f"episode timed out after {cfg.max_duration_s} s", file=sys.stderr)
        return EXIT_TIMEOUT
    return EXIT_OK


def cmd_batch(args: argparse.Namespace) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    if args.compare and args.n < 2:
        raise UsageError("--compare needs --n >= 2 for a Welch test")
    cfg = _episode_config(args)
    try:
        if args.compare:
            red = hs.run_batch(dataclasses.replace(cfg, condition=hs.Condition.REDIRECTED), args.n)
            base = hs.run_batch(dataclasses.replace(cfg, condition=hs.Condition.BASELINE), args.n)
            payload = {
                "redirected": red.to_dict(),
                "baseline": base.to_dict(),
                "comparison": hs.compare_conditions(base, red, "resets"),
            }
            timeouts = red.timeouts + base.timeouts
        else:
            summary = hs.run_batch(cfg, args.n)
            payload = {cfg.condition.value: summary.to_dict()}
            timeouts = summary.timeouts
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "summary.json", payload)
    if timeouts:
        print(f"{timeouts} episode(s) timed out", file=sys.stderr)
        return EXIT_TIMEOUT
    return EXIT_OK


def _foveation_config(delta: float) -> fov.FoveationConfig:
    try:
        return fov.FoveationConfig(delta_foveal=delta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_composite(args: argparse.Namespace) -> int:
    cfg = _foveation_config(args.delta)
    try:
        foveal = fov.read_ppm(args.foveal)
        nonfoveal = fov.read_ppm(args.nonfoveal)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read image: {exc}") from None
    if foveal.shape != nonfoveal.shape:
        raise UsageError(f"image size mismatch: {foveal.shape[1]}x{foveal.shape[0]} vs "
                         f"{nonfoveal.shape[1]}x{nonfoveal.shape[0]}")
    dims = (foveal.shape[1], foveal.shape[0])
    try:
        mask = fov.build_mask(_parse_gaze(args.gaze), dims, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    fov.write_ppm(args.out, fov.composite(foveal, nonfoveal, mask, cfg))
    if args.mask:
        fov.write_pgm(args.mask, mask.to_levels())
    return EXIT_OK


def cmd_mask(args: argparse.Namespace) -> int:
    cfg = _foveation_config(args.delta)
    if args.width < 1 or args.height < 1:
        raise UsageError("image dimensions must be positive")
    try:
        mask = fov.build_mask(_parse_gaze(args.gaze), (args.width, args.height), cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    fov.write_pgm(args.out, mask.to_levels())
    return EXIT_OK


def cmd_detect(args: argparse.Namespace) -> int:
    try:
        samples = read_gaze_csv(args.gaze)
    except StreamFormatError as exc:
        raise UsageError(str(exc)) from None
    except OSError as exc:
        raise UsageError(f"cannot read gaze stream: {exc}") from None
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_events_csv(args.out, detect_events(samples))
    return EXIT_OK


SWEEP_HEADER = ["delta_deg", "theta_deg", "foveal", "transition", "peripheral", "within_cap"]


def cmd_sweep(args: argparse.Namespace) -> int:
    deltas = parse_range(args.delta_range)
    thetas = parse_range(args.theta_range)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for d in deltas:
            fr = fov.zone_fractions(_foveation_config(d))
            for th in thetas:
                w.writerow([_num(d), _num(th), f"{fr['foveal']:.6f}", f"{fr['transition']:.6f}",
                            f"{fr['peripheral']:.6f}", int(th <= THETA_MAX)])
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="foveawalk", description="Foveated redirected-walking simulator and tools.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def episode_flags(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="episode config JSON")
        sp.add_argument("--condition", choices=[c.value for c in hs.Condition])
        sp.add_argument("--scenario", help="straight:L | insitu:B,R,RATE | path:FILE")

    sp = sub.add_parser("simulate", help="run one episode")
    episode_flags(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", default="out", help="output directory")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("batch", help="run seeds 0..n-1 and summarize")
    episode_flags(sp)
    sp.add_argument("--seed", type=int, help="first seed")
    sp.add_argument("--n", type=int, default=25)
    sp.add_argument("--compare", action="store_true", help="run both conditions and a Welch test")
    sp.add_argument("--out", default="out", help="output directory")
    sp.set_defaults(func=cmd_batch)

    sp = sub.add_parser("composite", help="composite foveal and non-foveal renders")
    sp.add_argument("--foveal", required=True)
    sp.add_argument("--nonfoveal", required=True)
    sp.add_argument("--gaze", required=True, help="X,Y in pixels")
    sp.add_argument("--delta", type=float, default=60.0, help="foveal angle in degrees")
    sp.add_argument("--out", required=True)
    sp.add_argument("--mask", help="also write the zone mask as PGM")
    sp.set_defaults(func=cmd_composite)

    sp = sub.add_parser("mask", help="write a zone mask as PGM")
    sp.add_argument("--width", type=int, required=True)
    sp.add_argument("--height", type=int, required=True)
    sp.add_argument("--gaze", required=True, help="X,Y in pixels")
    sp.add_argument("--delta", type=float, default=60.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_mask)

    sp = sub.add_parser("detect", help="detect blinks and saccades in a gaze CSV")
    sp.add_argument("--gaze", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("sweep", help="tabulate zone fractions over a (delta, theta) grid")
    sp.add_argument("--delta-range", default="20:60:10")
    sp.add_argument("--theta-range", default="0:15:1")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
