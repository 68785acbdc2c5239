"""Track-bound, curvature and gg-envelope checks on candidate sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ggenvelope import GgLookup, check_accel, query
from .track3d import TrackGeometry
from .trajgen import CandidateSet
from .validation import SelectionError


@dataclass(frozen=True)
class FeasibilityParams:
    d_w: float = 1.93
    d_s: float = 0.2
    kappa_max: float = 0.1


@dataclass(eq=False)
class FeasibilityReport:
    """Per-candidate violation counts (violating points) and worst signed slacks."""

    bounds_violations: np.ndarray
    curvature_violations: np.ndarray
    dynamics_violations: np.ndarray
    worst_slack_bounds: np.ndarray
    worst_slack_curvature: np.ndarray
    worst_slack_dynamics: np.ndarray
    valid: np.ndarray

    @property
    def total_violations(self) -> np.ndarray:
        return self.bounds_violations + self.curvature_violations + self.dynamics_violations

    @property
    def feasible(self) -> np.ndarray:
        return self.valid & (self.total_violations == 0)

    @property
    def violation_magnitude(self) -> np.ndarray:
        """Sum over the three checks of the worst violation depth (0 if satisfied)."""
        return sum(np.maximum(-w, 0.0) for w in (self.worst_slack_bounds, self.worst_slack_curvature,
                                                 self.worst_slack_dynamics))


def bounds_slack(cands, track: TrackGeometry, d_w, d_s):
    n_l, n_r = track.bounds_at(cands.s)
    half = 0.5 * d_w + d_s
    return np.minimum(n_l - half - cands.n, cands.n - (n_r + half))


def check_bounds(cands, track: TrackGeometry, d_w=1.93, d_s=0.2):
    """Per-point pass/fail of the margined lateral corridor."""
    return bounds_slack(cands, track, d_w, d_s) >= 0.0


def curvature_slack(kappa, kappa_max):
    return kappa_max - np.abs(kappa)


def check_curvature(kappa, kappa_max=0.1):
    """Per-point ``|kappa| <= kappa_max``; ``kappa`` may be a transformed candidate set."""
    if hasattr(kappa, "kin"):
        kappa = kappa.kin.kappa_hat
    return curvature_slack(kappa, kappa_max) >= 0.0


def dynamics_check(cands: CandidateSet, gg: GgLookup):
    kin = cands.kin
    if kin is None:
        raise ValueError("candidates need the Cartesian transform before the dynamics check")
    shape = query(gg, kin.v, kin.apparent.g_tilde)
    return check_accel(shape, kin.apparent)


def check_dynamics(cands: CandidateSet, gg: GgLookup):
    """Per-point pass/fail of the gg envelope at each point's speed and vertical load."""
    return dynamics_check(cands, gg).ok


def feasibility_report(cands: CandidateSet, track: TrackGeometry, gg: GgLookup,
                       params: FeasibilityParams | None = None) -> FeasibilityReport:
    params = params or FeasibilityParams()
    b = bounds_slack(cands, track, params.d_w, params.d_s)
    k = curvature_slack(cands.kin.kappa_hat, params.kappa_max)
    d = dynamics_check(cands, gg)
    d_slack = d.worst
    # the envelope test of check_accel is authoritative for the counts
    d_fail = ~d.ok
    return FeasibilityReport(
        bounds_violations=np.count_nonzero(b < 0.0, axis=1),
        curvature_violations=np.count_nonzero(k < 0.0, axis=1),
        dynamics_violations=np.count_nonzero(d_fail, axis=1),
        worst_slack_bounds=np.min(b, axis=1),
        worst_slack_curvature=np.min(k, axis=1),
        worst_slack_dynamics=np.min(d_slack, axis=1),
        valid=np.asarray(cands.valid, dtype=bool),
    )


def soft_fallback(report: FeasibilityReport) -> int:
    """Index with the fewest violations, then the smallest violation depth, then lowest index."""
    valid = report.valid
    if not np.any(valid):
        valid = np.ones_like(valid)
    idx = np.flatnonzero(valid)
    order = np.lexsort((idx, report.violation_magnitude[idx], report.total_violations[idx]))
    return int(idx[order[0]])


def evaluate_set(cands: CandidateSet, track: TrackGeometry, gg: GgLookup,
                 params: FeasibilityParams | None = None):
    """``(feasible indices, fallback index or None, report)``.

    The fallback is only computed when no candidate is feasible.
    """
    if len(cands) == 0:
        raise SelectionError("empty candidate set")
    report = feasibility_report(cands, track, gg, params)
    feasible = np.flatnonzero(report.feasible)
    fallback = None if feasible.size else soft_fallback(report)
    return feasible, fallback, report
