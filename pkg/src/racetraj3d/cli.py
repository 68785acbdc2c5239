"""Command-line entry point.

Exit codes: 0 success, 2 configuration or file error, 3 scenario aborted.
The log level comes from the ``RACETRAJ3D_LOG`` environment variable
(``WARNING`` by default).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np
import yaml

from .ggenvelope import save_gg
from .simulation import DEFAULT_GG, ScenarioConfig, ScenarioResult, build_context, build_gg, run_scenario, write_trace
from .synthetic import TRACK_KINDS, make_track
from .track3d import save_track
from .validation import ScenarioAborted

LOG_ENV = "RACETRAJ3D_LOG"
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3

log = logging.getLogger("racetraj3d")

# make-track flag -> keyword of the builder, per track kind
TRACK_FLAGS = {
    "oval_banked": {"radius": "radius", "length": "straight_length", "banking": "banking_deg", "width": "width",
                    "transition": "transition", "ds": "ds"},
    "complex_synthetic": {"radius": "scale", "slope": "max_slope_deg", "banking": "max_banking_deg",
                          "width": "width", "ds": "ds"},
    "flat_circle": {"radius": "radius", "width": "width", "ds": "ds"},
    "straight": {"length": "length", "width": "width", "ds": "ds"},
}


class CliError(Exception):
    """User-facing configuration or file problem (exit code 2)."""


def tool_version() -> str:
    try:
        return version("racetraj3d")
    except PackageNotFoundError:
        return "unknown"


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(dest: Path, columns, rows) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


@dataclasses.dataclass
class RunManifest:
    """Record of one CLI invocation and every file it wrote."""

    config_path: str
    output_dir: str
    config_hash: str
    tool_version: str
    artifacts: list = dataclasses.field(default_factory=list)
    timestamp: str = ""

    def add(self, path: Path) -> Path:
        self.artifacts.append(path.name)
        return path

    def write(self, out_dir: Path) -> Path:
        self.timestamp = datetime.now(timezone.utc).isoformat()
        dest = out_dir / "manifest.json"
        self.artifacts.append(dest.name)
        dest.write_text(json.dumps(dataclasses.asdict(self), indent=2) + "\n", encoding="utf-8")
        return dest


def file_hash(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"config file not found: {path}")
    try:
        return ScenarioConfig.from_yaml(path)
    except (yaml.YAMLError, TypeError, ValueError) as err:
        raise CliError(f"invalid config {path}: {err}") from err


def _summary(cfg: ScenarioConfig, result: ScenarioResult) -> dict:
    return {
        "name": cfg.name,
        "racing_line_mode": cfg.racing_line_mode,
        "trajectory_mode": cfg.trajectory_mode,
        "dynamics_mode": cfg.dynamics_mode,
        "lap_times": [float(x) for x in result.lap_times],
        "racing_line_lap_time": float(result.racing_line_lap_time),
        "soft_fallbacks": int(result.soft_fallbacks),
        "cycles": int(result.trace["cycle"].size),
        "aborted": bool(result.aborted),
        "message": result.message,
    }


def write_run_outputs(cfg: ScenarioConfig, result: ScenarioResult, ctx, out_dir: Path, manifest: RunManifest):
    tr = result.trace
    summary = manifest.add(out_dir / "summary.json")
    summary.write_text(json.dumps(_summary(cfg, result), indent=2) + "\n", encoding="utf-8")
    write_trace(result, manifest.add(out_dir / "trace.csv"))
    opp = result.opponent_trace
    n_opp = len(cfg.opponents)
    opp_s = [f"opp{m}_s" for m in range(n_opp)]
    opp_n = [f"opp{m}_n" for m in range(n_opp)]
    write_csv(manifest.add(out_dir / "plot_s_t.csv"), ["time", "s"] + opp_s,
              zip(tr["time"], tr["s"], *(opp[c] for c in opp_s)))
    write_csv(manifest.add(out_dir / "plot_n_s.csv"), ["s", "n"] + [c for pair in zip(opp_s, opp_n) for c in pair],
              zip(tr["s"], tr["n"], *(opp[c] for pair in zip(opp_s, opp_n) for c in pair)))
    write_csv(manifest.add(out_dir / "plot_v_t.csv"), ["time", "v", "v_racing_line"],
              zip(tr["time"], tr["v"], ctx.offline.speed_at_s(tr["s"]) if tr["s"].size else []))
    ctx.offline.to_csv(manifest.add(out_dir / "racing_line.csv"))


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(str(args.config), str(out_dir), file_hash(args.config), tool_version())
    try:
        ctx = build_context(cfg)
    except FileNotFoundError as err:
        raise CliError(str(err)) from err
    except ValueError as err:
        raise CliError(f"invalid scenario inputs: {err}") from err
    status = EXIT_OK

    def progress(world):
        if world.cycle % 100 == 0:
            log.debug("t=%.1f s  s=%.1f m  laps=%d", world.clock, world.ego.s_0, max(len(world.crossings) - 1, 0))

    try:
        result = run_scenario(cfg, ctx, progress=progress)
    except ScenarioAborted as err:
        result = err.result
        status = EXIT_ABORT
        log.error("%s", err)
    write_run_outputs(cfg, result, ctx, out_dir, manifest)
    manifest.write(out_dir)
    for k, lap in enumerate(result.lap_times):
        log.info("lap %d: %r s", k + 1, lap)
    print(json.dumps(_summary(cfg, result)))
    return status


def cmd_make_track(args) -> int:
    flags = TRACK_FLAGS[args.kind]
    params = {}
    for flag in ("radius", "length", "banking", "slope", "width", "transition", "ds"):
        value = getattr(args, flag)
        if value is None:
            continue
        if flag not in flags:
            raise CliError(f"--{flag} does not apply to track kind {args.kind}")
        params[flags[flag]] = value
    try:
        track = make_track(args.kind, **params)
    except ValueError as err:
        raise CliError(f"invalid track parameters: {err}") from err
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_track(track, args.out)
    log.info("wrote %s (%r m, closed=%s)", args.out, track.total_length, track.closed)
    return EXIT_OK


def cmd_make_gg(args) -> int:
    params = {k: getattr(args, k) for k in DEFAULT_GG if getattr(args, k) is not None}
    try:
        gg = build_gg(ScenarioConfig(gg=params))
    except ValueError as err:
        raise CliError(f"invalid gg parameters: {err}") from err
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_gg(gg, args.out)
    return EXIT_OK


def cmd_racing_line(args) -> int:
    cfg = load_config(args.config)
    try:
        ctx = build_context(cfg)
    except FileNotFoundError as err:
        raise CliError(str(err)) from err
    except ValueError as err:
        raise CliError(f"invalid scenario inputs: {err}") from err
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    ctx.offline.to_csv(args.out)
    print(json.dumps({"lap_time": ctx.offline.horizon, "lap_length": ctx.offline.lap_length}))
    return EXIT_OK


def _track_key(cfg: ScenarioConfig):
    spec = dict(cfg.track)
    if "file" in spec:
        return ("file", str((Path(cfg.base_dir) / spec["file"]).resolve()))
    return ("synthetic", json.dumps(spec, sort_keys=True))


def cmd_compare(args) -> int:
    paths = [p for p in args.configs.split(",") if p]
    if len(paths) < 2:
        raise CliError("compare needs at least two configs")
    configs = [load_config(p) for p in paths]
    keys = {_track_key(c) for c in configs}
    if len(keys) > 1:
        raise CliError("configs do not share a track")
    rows = []
    status = EXIT_OK
    for path, cfg in zip(paths, configs):
        try:
            result = run_scenario(cfg)
        except ScenarioAborted as err:
            result = err.result
            status = EXIT_ABORT
            log.error("%s: %s", path, err)
        except FileNotFoundError as err:
            raise CliError(str(err)) from err
        rows.append((path, cfg, result))
    base = rows[0][2].lap_time
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["config", "name", "racing_line_mode", "trajectory_mode", "dynamics_mode", "lap_time",
                    "delta", "delta_percent", "soft_fallbacks", "aborted"])
        for path, cfg, res in rows:
            lap = res.lap_time
            if lap is None or base is None:
                lap_s, d, dp = ("" if lap is None else repr(float(lap))), "", ""
            else:
                lap_s, d, dp = repr(float(lap)), repr(float(lap - base)), repr(float(100.0 * (lap - base) / base))
            w.writerow([path, cfg.name, cfg.racing_line_mode, cfg.trajectory_mode, cfg.dynamics_mode, lap_s, d, dp,
                        res.soft_fallbacks, int(res.aborted)])
    print(Path(args.out).read_text(encoding="utf-8"), end="")
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="racetraj3d", description="3D racing trajectory planner and simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("make-track", help="write a synthetic track CSV")
    p.add_argument("--kind", required=True, choices=TRACK_KINDS)
    p.add_argument("--radius", type=float, help="turn radius; plan-view scale for complex_synthetic")
    p.add_argument("--length", type=float, help="straight length")
    p.add_argument("--banking", type=float, help="maximum banking in degrees")
    p.add_argument("--slope", type=float, help="maximum slope in degrees")
    p.add_argument("--width", type=float)
    p.add_argument("--transition", type=float, help="curvature ramp length of the oval turns")
    p.add_argument("--ds", type=float, help="sample spacing")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_track)

    p = sub.add_parser("make-gg", help="write a synthetic gg lookup CSV")
    for key, default in DEFAULT_GG.items():
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=type(default), default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_gg)

    p = sub.add_parser("racing-line", help="write the stored racing line of a scenario config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_racing_line)

    p = sub.add_parser("compare", help="lap-time table over several configs")
    p.add_argument("--configs", required=True, help="comma-separated config paths")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def log_level() -> int:
    level = logging.getLevelName(os.environ.get(LOG_ENV, "WARNING").strip().upper())
    return level if isinstance(level, int) else logging.WARNING


def main(argv=None) -> int:
    logging.basicConfig(level=log_level(), format="%(levelname)s %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
