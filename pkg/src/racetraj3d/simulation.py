"""Deterministic closed-loop scenario simulation.

Each cycle generates (or re-anchors) the racing line, predicts the opponents
exactly, plans, and then moves the ego along the chosen trajectory by
``dt_sim``. Opponents follow deterministic motion rules.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import yaml

from .feasibility import FeasibilityParams, evaluate_set
from .ggenvelope import GgLookup, load_gg, query, synth_gg
from .kinematics import road_kinematics
from .racingline import (
    LateralPath,
    RacingLine,
    RacingLineMargins,
    apex_path,
    centerline_path,
    offline_racing_line,
    online_racing_line,
)
from .sampling import VehicleState, longitudinal_arrays
from .selection import CostWeights, Prediction, filter_in_range, racing_line_speed, select, total_cost
from .synthetic import make_track
from .track3d import TrackGeometry, load_track
from .trajgen import CandidateSet, generate_candidates, to_cartesian
from .validation import ScenarioAborted

RACING_LINE_MODES = ("offline", "online")
TRAJECTORY_MODES = ("relative", "jerk_optimal")
DYNAMICS_MODES = ("3d", "2d")
OPPONENT_TYPES = ("static", "follower", "constant_speed")
TRACE_COLUMNS = ("cycle", "time", "s", "s_dot", "s_ddot", "n", "n_dot", "n_ddot", "v", "ax_tilde", "ay_tilde",
                 "g_tilde", "ay_flat", "ay_max_flat", "n_candidates", "n_feasible", "soft_fallback",
                 "violations", "cost", "relative_lon", "chosen")


@dataclass(frozen=True)
class PlannerParams:
    """Planner, racing-line and simulation parameters (SI units)."""

    H_rl: float = 500.0
    T: float = 3.0
    N_sdot: int = 40
    K_sdot: float = 1.2
    N_n: int = 15
    s0_thr: float = 0.3
    d_w: float = 1.93
    d_s: float = 0.2
    kappa_max: float = 0.1
    d_s_rl: float = 0.5
    a_mgn: float = 0.1
    a_abs_mgn: float = 0.8
    w_n: float = 0.1
    w_v: float = 100.0
    w_pr: float = 5000.0
    k_s: float = 0.015
    k_n: float = 0.5
    d_snr: float = 200.0
    N: int = 30
    dt_sim: float = 0.1
    blend_length: tuple = (150.0, 250.0, 350.0, math.inf)
    lat_reserve: float = 0.02
    cap_offset: float = 0.1

    def __post_init__(self):
        lengths = np.atleast_1d(np.asarray(self.blend_length, dtype=float))
        if lengths.ndim != 1 or lengths.size == 0:
            raise ValueError("blend_length must be a number or a non-empty list")
        if np.any(np.isnan(lengths)) or np.any(lengths <= 0) or not np.isfinite(lengths[0]):
            raise ValueError("blend lengths must be positive, the first one finite")
        object.__setattr__(self, "blend_length", tuple(float(x) for x in lengths))
        for f in dataclasses.fields(self):
            if f.name == "blend_length":
                continue
            vals = np.atleast_1d(np.asarray(getattr(self, f.name), dtype=float))
            if not np.all(np.isfinite(vals)) or np.any(vals < 0):
                raise ValueError(f"{f.name} must be non-negative, got {getattr(self, f.name)!r}")
        for name in ("H_rl", "T", "K_sdot", "d_w", "dt_sim", "kappa_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.dt_sim > self.T:
            raise ValueError("dt_sim must not exceed the planning horizon T")
        if self.N < 2 or self.N_sdot < 2 or self.N_n < 2:
            raise ValueError("N, N_sdot and N_n must be at least 2")

    @property
    def margins(self):
        return dict(d_s_rl=self.d_s_rl, d_w=self.d_w, a_mgn=self.a_mgn, a_abs_mgn=self.a_abs_mgn,
                    lat_reserve=self.lat_reserve)

    @property
    def weights(self) -> CostWeights:
        return CostWeights(self.w_n, self.w_v, self.w_pr, self.k_s, self.k_n, self.d_snr)

    @property
    def feasibility(self) -> FeasibilityParams:
        return FeasibilityParams(self.d_w, self.d_s, self.kappa_max)


@dataclass(frozen=True)
class OpponentSpec:
    """Deterministic opponent rule.

    ``static``: fixed ``(s, n)``. ``constant_speed``: ``s`` advances at
    ``speed`` with fixed ``n``. ``follower``: replays the racing line at
    ``speed_fraction`` of its pace starting from ``s``.
    """

    type: str
    s: float
    n: float = 0.0
    speed: float = 0.0
    speed_fraction: float = 0.7

    def __post_init__(self):
        if self.type not in OPPONENT_TYPES:
            raise ValueError(f"opponent type must be one of {OPPONENT_TYPES}, got {self.type!r}")
        if self.speed < 0 or not 0.0 < self.speed_fraction <= 1.0:
            raise ValueError("opponent speed must be >= 0 and speed_fraction in (0, 1]")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    track: dict = field(default_factory=lambda: {"kind": "oval_banked"})
    gg: dict = field(default_factory=dict)
    path: dict = field(default_factory=lambda: {"kind": "centerline"})
    racing_line_mode: str = "offline"
    trajectory_mode: str = "relative"
    dynamics_mode: str = "3d"
    v_max: float = 90.0
    planner: PlannerParams = field(default_factory=PlannerParams)
    opponents: tuple = ()
    ego: dict = field(default_factory=dict)
    laps: int = 1
    duration: float | None = None
    abort_after: int = 100
    seed: int = 0
    base_dir: str = "."

    def __post_init__(self):
        if isinstance(self.planner, dict):
            object.__setattr__(self, "planner", PlannerParams(**self.planner))
        object.__setattr__(self, "opponents", tuple(
            OpponentSpec(**o) if isinstance(o, dict) else o for o in self.opponents))
        if self.racing_line_mode not in RACING_LINE_MODES:
            raise ValueError(f"racing_line_mode must be one of {RACING_LINE_MODES}")
        if self.trajectory_mode not in TRAJECTORY_MODES:
            raise ValueError(f"trajectory_mode must be one of {TRAJECTORY_MODES}")
        if self.dynamics_mode not in DYNAMICS_MODES:
            raise ValueError(f"dynamics_mode must be one of {DYNAMICS_MODES}")
        if self.v_max <= 0 or self.laps < 0 or self.abort_after < 1:
            raise ValueError("v_max must be positive, laps >= 0, abort_after >= 1")
        if self.duration is not None and self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.laps == 0 and self.duration is None:
            raise ValueError("need a lap count or a duration")

    @property
    def flat(self) -> bool:
        return self.dynamics_mode == "2d"

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> ScenarioConfig:
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        planner = data.pop("planner", None) or {}
        unknown = set(planner) - {f.name for f in dataclasses.fields(PlannerParams)}
        if unknown:
            raise ValueError(f"unknown planner keys: {sorted(unknown)}")
        opponents = tuple(OpponentSpec(**o) for o in (data.pop("opponents", None) or ()))
        data.setdefault("base_dir", str(base_dir))
        return cls(planner=PlannerParams(**planner), opponents=opponents, **data)

    @classmethod
    def from_yaml(cls, path) -> ScenarioConfig:
        path = Path(path)
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if not isinstance(data, dict):
            raise ValueError("scenario config must be a mapping")
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["opponents"] = [dataclasses.asdict(o) for o in self.opponents]
        out.pop("base_dir")
        return out


# --------------------------------------------------------------------------- setup


def _resolve(base_dir, name):
    p = Path(name)
    return p if p.is_absolute() else Path(base_dir) / p


def build_track(config: ScenarioConfig) -> TrackGeometry:
    spec = dict(config.track)
    if "file" in spec:
        path = _resolve(config.base_dir, spec["file"])
        if not path.is_file():
            raise FileNotFoundError(f"track file not found: {path}")
        return load_track(path)
    kind = spec.pop("kind", "oval_banked")
    return make_track(kind, **spec.get("params", {}))


DEFAULT_GG = dict(mu_x=1.5, mu_y=1.5, ax_drive_max=8.0, p=1.5, v_max=100.0, n_v=11, g_min=2.0, g_max=30.0,
                  n_g=15)


def build_gg(config: ScenarioConfig) -> GgLookup:
    spec = dict(config.gg)
    if "file" in spec:
        path = _resolve(config.base_dir, spec["file"])
        if not path.is_file():
            raise FileNotFoundError(f"gg file not found: {path}")
        return load_gg(path)
    unknown = set(spec) - set(DEFAULT_GG)
    if unknown:
        raise ValueError(f"unknown gg keys: {sorted(unknown)}")
    p = {**DEFAULT_GG, **spec}
    return synth_gg(p["mu_x"], p["mu_y"], p["ax_drive_max"], p["p"], np.linspace(0.0, p["v_max"], int(p["n_v"])),
                    np.linspace(p["g_min"], p["g_max"], int(p["n_g"])))


def build_path(config: ScenarioConfig, track: TrackGeometry) -> LateralPath:
    spec = dict(config.path)
    kind = spec.pop("kind", "centerline")
    if kind == "centerline":
        return centerline_path(track)
    if kind == "apex":
        return apex_path(track, **spec)
    raise ValueError(f"unknown path kind {kind!r}")


class Context(NamedTuple):
    """Immutable per-scenario inputs shared by all cycles."""

    config: ScenarioConfig
    track: TrackGeometry
    gg: GgLookup
    path: LateralPath
    offline: RacingLine
    margins: RacingLineMargins


def build_context(config: ScenarioConfig, track: TrackGeometry | None = None,
                  gg: GgLookup | None = None) -> Context:
    """Load or synthesize the scenario inputs; ``track``/``gg`` override the config."""
    track = track if track is not None else build_track(config)
    gg = gg if gg is not None else build_gg(config)
    path = build_path(config, track)
    margins = RacingLineMargins(v_max=config.v_max, **config.planner.margins)
    offline = offline_racing_line(track, gg, path, margins, flat=config.flat)
    return Context(config, track, gg, path, offline, margins)


# --------------------------------------------------------------------------- world


@dataclass(frozen=True)
class WorldState:
    clock: float
    cycle: int
    ego: VehicleState
    opponents: tuple
    crossings: tuple = ()
    consecutive_fallbacks: int = 0


def opponent_position(ctx: Context, spec: OpponentSpec, t):
    """Unwrapped ``(s, n)`` of an opponent at absolute times ``t``."""
    t = np.asarray(t, dtype=float)
    if spec.type == "static":
        return np.full(t.shape, spec.s), np.full(t.shape, spec.n)
    if spec.type == "constant_speed":
        return spec.s + spec.speed * t, np.full(t.shape, spec.n)
    rl = ctx.offline
    lap_t = rl.horizon
    L = rl.lap_length
    k0 = math.floor(spec.s / L)
    tau = float(rl.time_at(spec.s - k0 * L)) + spec.speed_fraction * t
    laps = np.floor(tau / lap_t)
    local = tau - laps * lap_t
    s = np.interp(local, rl.t, rl.s) + (laps + k0) * L
    n = np.interp(local, rl.t, rl.n)
    return s, n


def predict_opponents(ctx: Context, world: WorldState, times) -> Prediction:
    """Exact opponent positions at ``world.clock + times``."""
    times = np.asarray(times, dtype=float)
    if not ctx.config.opponents:
        return Prediction.empty(times.size)
    s, n = zip(*(opponent_position(ctx, o, world.clock + times) for o in ctx.config.opponents))
    return Prediction(np.array(s), np.array(n))


def initial_world(ctx: Context) -> WorldState:
    ego = dict(ctx.config.ego)
    s0 = float(ego.get("s", 0.0))
    if ego.get("on_racing_line", True):
        r = ctx.offline.anchored(s0).state_at(0.0)
        scale = float(ego.get("speed_fraction", 1.0))
        state = VehicleState(s0, float(r.s_dot) * scale, float(r.s_ddot) * scale**2, float(r.n), float(r.n_dot) * scale,
                             float(r.n_ddot) * scale**2)
    else:
        state = VehicleState(s0, float(ego.get("s_dot", 0.0)), float(ego.get("s_ddot", 0.0)), float(ego.get("n", 0.0)),
                             float(ego.get("n_dot", 0.0)), float(ego.get("n_ddot", 0.0)))
    return WorldState(0.0, 0, state, ctx.config.opponents)


class CycleOutcome(NamedTuple):
    candidates: CandidateSet
    index: int
    soft_fallback: bool
    n_feasible: int
    violations: int
    cost: float
    racing_line: RacingLine
    prediction: Prediction


def cycle_racing_line(ctx: Context, ego: VehicleState) -> RacingLine:
    cfg = ctx.config
    if cfg.racing_line_mode == "offline":
        return ctx.offline.anchored(ego.s_0)
    return online_racing_line(ctx.track, ctx.gg, ctx.path, ego, horizon=cfg.planner.H_rl, margins=ctx.margins,
                              flat=cfg.flat, reference=ctx.offline, blend_length=cfg.planner.blend_length,
                              cap_offset=cfg.planner.cap_offset)


def plan_cycle(ctx: Context, world: WorldState) -> CycleOutcome:
    cfg = ctx.config
    p = cfg.planner
    ego = world.ego
    rl = cycle_racing_line(ctx, ego)
    lon = longitudinal_arrays(ego, rl, p.T, p.N_sdot, p.K_sdot, p.s0_thr)
    cands = generate_candidates(ego, rl, lon, p.T, ctx.track, p.N_n, p.d_w, p.s0_thr, cfg.trajectory_mode, p.N)
    to_cartesian(cands, ctx.track, flat=cfg.flat)
    feasible, fallback, report = evaluate_set(cands, ctx.track, ctx.gg, p.feasibility)
    prediction = filter_in_range(predict_opponents(ctx, world, cands.t), ego.s_0, p.d_snr, ctx.track)
    v_rl = racing_line_speed(rl, cands.t, ctx.track)
    costs = total_cost(cands, rl, prediction, p.weights, ctx.track, v_rl=v_rl)
    index, used_fallback = select(costs, feasible, fallback)
    return CycleOutcome(cands, index, used_fallback, int(feasible.size), int(report.total_violations[index]),
                        float(costs[index]), rl, prediction)


def _lap_crossings(L, s_prev, s_new, t_prev, dt):
    out = []
    k_prev = math.floor(s_prev / L)
    k_new = math.floor(s_new / L)
    for k in range(k_prev + 1, k_new + 1):
        frac = (k * L - s_prev) / (s_new - s_prev)
        out.append(t_prev + frac * dt)
    return out


def step(ctx: Context, world: WorldState, outcome: CycleOutcome) -> WorldState:
    dt = ctx.config.planner.dt_sim
    ego = outcome.candidates.state_at(outcome.index, dt)
    if ego.s_dot_0 < 0.0:
        ego = dataclasses.replace(ego, s_dot_0=0.0)
    crossings = world.crossings
    if ctx.track.closed and ego.s_0 > world.ego.s_0:
        crossings = crossings + tuple(_lap_crossings(ctx.track.total_length, world.ego.s_0, ego.s_0, world.clock, dt))
    fallbacks = world.consecutive_fallbacks + 1 if outcome.soft_fallback else 0
    return WorldState(world.clock + dt, world.cycle + 1, ego, world.opponents, crossings, fallbacks)


# --------------------------------------------------------------------------- run


@dataclass(eq=False)
class ScenarioResult:
    name: str
    lap_times: list
    crossings: list
    racing_line_lap_time: float
    soft_fallbacks: int
    trace: dict
    opponent_trace: dict
    aborted: bool = False
    message: str = ""

    @property
    def lap_time(self):
        return self.lap_times[0] if self.lap_times else None


def _trace_row(ctx: Context, world: WorldState, out: CycleOutcome):
    c = out.candidates
    i = out.index
    kin = c.kin
    # level-road view of the executed point for comparison against the flat envelope
    pts = ctx.track.evaluate(c.s[i, :1])
    flat = road_kinematics(pts, c.s_dot[i, :1], c.s_ddot[i, :1], c.n[i, :1], c.n_dot[i, :1], c.n_ddot[i, :1], flat=True)
    ay_max_flat = query(ctx.gg, flat.v, flat.apparent.g_tilde).ay_max
    e = world.ego
    return (world.cycle, world.clock, e.s_0, e.s_dot_0, e.s_ddot_0, e.n_0, e.n_dot_0, e.n_ddot_0, float(kin.v[i, 0]),
            float(kin.apparent.a_x_tilde[i, 0]), float(kin.apparent.a_y_tilde[i, 0]), float(kin.apparent.g_tilde[i, 0]),
            float(flat.apparent.a_y_tilde[0]), float(ay_max_flat[0]), len(c), out.n_feasible, int(out.soft_fallback),
            out.violations, out.cost, int(c.lon_mode == "relative"), i)


def run_scenario(config: ScenarioConfig, ctx: Context | None = None, progress=None) -> ScenarioResult:
    """Simulate until the configured flying laps are complete or the duration elapses.

    Raises :class:`ScenarioAborted` (with the partial result attached as
    ``.result``) after ``abort_after`` consecutive soft-fallback cycles.
    """
    ctx = ctx or build_context(config)
    world = initial_world(ctx)
    rows = []
    opp = {f"opp{m}_{k}": [] for m in range(len(config.opponents)) for k in ("s", "n")}
    soft = 0
    limit_time = config.duration
    if limit_time is None:
        # generous cap: many racing-line laps
        limit_time = (config.laps + 2) * ctx.offline.horizon * 3.0
    aborted = False
    message = ""
    while True:
        if config.laps and ctx.track.closed and len(world.crossings) >= config.laps + 1:
            break
        if world.clock >= limit_time - 1e-9:
            break
        out = plan_cycle(ctx, world)
        rows.append(_trace_row(ctx, world, out))
        for m, spec in enumerate(config.opponents):
            s_m, n_m = opponent_position(ctx, spec, world.clock)
            opp[f"opp{m}_s"].append(float(s_m))
            opp[f"opp{m}_n"].append(float(n_m))
        soft += int(out.soft_fallback)
        world = step(ctx, world, out)
        if progress is not None:
            progress(world)
        if world.consecutive_fallbacks >= config.abort_after:
            aborted = True
            message = (f"aborted at t={world.clock:.1f} s, s={world.ego.s_0:.1f} m after "
                       f"{world.consecutive_fallbacks} consecutive soft-fallback cycles")
            break
    crossings = list(world.crossings)
    lap_times = [b - a for a, b in zip(crossings[:-1], crossings[1:])]
    trace = {name: np.array([r[k] for r in rows]) for k, name in enumerate(TRACE_COLUMNS)}
    opponent_trace = {k: np.array(v) for k, v in opp.items()}
    result = ScenarioResult(config.name, lap_times, crossings, ctx.offline.horizon, soft, trace, opponent_trace,
                            aborted, message)
    if aborted:
        err = ScenarioAborted(message)
        err.result = result
        raise err
    return result


def write_trace(result: ScenarioResult, dest) -> None:
    cols = list(TRACE_COLUMNS) + list(result.opponent_trace)
    data = [result.trace[c] for c in TRACE_COLUMNS] + [result.opponent_trace[c] for c in result.opponent_trace]
    lines = [",".join(cols)]
    for row in zip(*data):
        lines.append(",".join(repr(float(x)) if isinstance(x, (float, np.floating)) else str(int(x)) for x in row))
    Path(dest).write_text("\n".join(lines) + "\n", encoding="utf-8")


def overtake_completion(result: ScenarioResult, opponent=0, gap=5.0):
    """Ego ``s`` at the first cycle the ego leads ``opponent`` by at least ``gap`` metres.

    Returns ``None`` if the ego started ahead or never completes the pass.
    """
    s = result.trace["s"]
    s_opp = result.opponent_trace[f"opp{opponent}_s"]
    if s.size == 0 or s[0] - s_opp[0] >= gap:
        return None
    ahead = np.flatnonzero(s - s_opp >= gap)
    return float(s[ahead[0]]) if ahead.size else None
