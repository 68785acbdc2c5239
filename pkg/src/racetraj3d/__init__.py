"""Sampling-based local trajectory planning on 3D race tracks."""

from .estimator import LocalPlanner, RacingLineProfiler
from .feasibility import evaluate_set
from .ggenvelope import GgLookup, load_gg, synth_gg
from .racingline import RacingLine, offline_racing_line, online_racing_line
from .selection import select, total_cost
from .simulation import ScenarioConfig, build_context, run_scenario
from .track3d import TrackGeometry, load_track
from .trajgen import generate_candidates, to_cartesian

__version__ = "0.1.0"

__all__ = [
    "GgLookup",
    "LocalPlanner",
    "RacingLine",
    "RacingLineProfiler",
    "ScenarioConfig",
    "TrackGeometry",
    "build_context",
    "evaluate_set",
    "generate_candidates",
    "load_gg",
    "load_track",
    "offline_racing_line",
    "online_racing_line",
    "run_scenario",
    "select",
    "synth_gg",
    "to_cartesian",
    "total_cost",
]
