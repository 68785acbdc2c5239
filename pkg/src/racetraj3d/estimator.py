"""Estimator-style wrappers around the racing-line profiler and the local planner.

Both follow the scikit-learn conventions: hyper-parameters are plain
constructor arguments, ``fit`` takes a :class:`TrackGeometry` and stores the
learned state in attributes with a trailing underscore.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .sampling import VehicleState
from .simulation import (
    PlannerParams,
    ScenarioConfig,
    WorldState,
    build_context,
    plan_cycle,
)
from .track3d import TrackGeometry

STATE_COLUMNS = ("s", "s_dot", "s_ddot", "n", "n_dot", "n_ddot")


def _check_track(track):
    if not isinstance(track, TrackGeometry):
        raise TypeError(f"expected a TrackGeometry, got {type(track).__name__}")
    return track


class RacingLineProfiler(BaseEstimator):
    """Closed-lap racing line over a lateral path.

    Parameters
    ----------
    path : {"centerline", "apex"}
        Lateral path the speed profile is computed for.
    gg : dict, optional
        Synthetic gg-diagram parameters (see ``DEFAULT_GG``).
    v_max : float
        Top speed in m/s.
    flat : bool
        Ignore slope and banking (level-road model).
    planner : dict, optional
        Margin parameters (``d_s_rl``, ``a_mgn``, ``a_abs_mgn``, ...).

    Attributes
    ----------
    racing_line_ : RacingLine
    lap_time_ : float
    """

    def __init__(self, path="centerline", gg=None, v_max=90.0, flat=False, planner=None):
        self.path = path
        self.gg = gg
        self.v_max = v_max
        self.flat = flat
        self.planner = planner

    def _config(self, **extra):
        return ScenarioConfig(path={"kind": self.path} if isinstance(self.path, str) else dict(self.path),
                              gg=dict(self.gg or {}), v_max=self.v_max,
                              dynamics_mode="2d" if self.flat else "3d",
                              planner=PlannerParams(**(self.planner or {})), **extra)

    def fit(self, X, y=None):
        """Compute the racing line on track ``X``."""
        track = _check_track(X)
        self.context_ = build_context(self._config(), track=track)
        self.racing_line_ = self.context_.offline
        self.lap_time_ = self.racing_line_.horizon
        return self

    def predict(self, X):
        """Racing-line ``s_dot`` at arc lengths ``X`` (wrapped around the lap)."""
        check_is_fitted(self, "racing_line_")
        return self.racing_line_.speed_at_s(np.asarray(X, dtype=float))


class LocalPlanner(BaseEstimator):
    """One planning cycle per ego state against a fixed set of opponents.

    Parameters
    ----------
    path, gg, v_max : see :class:`RacingLineProfiler`.
    racing_line_mode : {"offline", "online"}
    trajectory_mode : {"relative", "jerk_optimal"}
    dynamics_mode : {"3d", "2d"}
    planner : dict, optional
        Overrides of :class:`PlannerParams`.
    opponents : sequence of dict, optional
        Opponent rules (``type``, ``s``, ``n``, ...); positions refer to
        time zero of every prediction.

    Attributes
    ----------
    context_ : Context
    last_outcome_ : CycleOutcome or None
        Full result of the most recent plan.
    """

    def __init__(self, path="centerline", gg=None, v_max=90.0, racing_line_mode="offline",
                 trajectory_mode="relative", dynamics_mode="3d", planner=None, opponents=None):
        self.path = path
        self.gg = gg
        self.v_max = v_max
        self.racing_line_mode = racing_line_mode
        self.trajectory_mode = trajectory_mode
        self.dynamics_mode = dynamics_mode
        self.planner = planner
        self.opponents = opponents

    def fit(self, X, y=None):
        """Prepare track, gg lookup and stored racing line for track ``X``."""
        track = _check_track(X)
        cfg = ScenarioConfig(path={"kind": self.path} if isinstance(self.path, str) else dict(self.path),
                             gg=dict(self.gg or {}), v_max=self.v_max, racing_line_mode=self.racing_line_mode,
                             trajectory_mode=self.trajectory_mode, dynamics_mode=self.dynamics_mode,
                             planner=PlannerParams(**(self.planner or {})), opponents=tuple(self.opponents or ()))
        self.context_ = build_context(cfg, track=track)
        self.last_outcome_ = None
        return self

    def plan(self, state: VehicleState):
        """Full planning outcome for one ego state."""
        check_is_fitted(self, "context_")
        world = WorldState(0.0, 0, state, self.context_.config.opponents)
        self.last_outcome_ = plan_cycle(self.context_, world)
        return self.last_outcome_

    def predict(self, X):
        """Chosen trajectories for ego states ``X`` of shape ``(k, 6)``.

        Columns of ``X`` and of the last axis of the result follow
        ``STATE_COLUMNS``; the result has shape ``(k, N, 6)``.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(STATE_COLUMNS):
            raise ValueError(f"expected {len(STATE_COLUMNS)} state columns, got {X.shape[1]}")
        out = []
        for row in X:
            o = self.plan(VehicleState(*row))
            c, i = o.candidates, o.index
            out.append(np.column_stack([c.s[i], c.s_dot[i], c.s_ddot[i], c.n[i], c.n_dot[i], c.n_ddot[i]]))
        return np.stack(out)
