"""Cost evaluation and selection of the planned trajectory."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .kinematics import road_kinematics
from .track3d import TrackGeometry
from .validation import SelectionError, check_positive

COST_TIE_TOL = 1e-12


class Prediction(NamedTuple):
    """Opponent positions ``(M, N)`` at the candidates' time points."""

    s: np.ndarray
    n: np.ndarray

    @classmethod
    def empty(cls, N):
        return cls(np.zeros((0, N)), np.zeros((0, N)))

    def __len__(self):
        return self.s.shape[0]


@dataclass(frozen=True)
class CostWeights:
    w_n: float = 0.1
    w_v: float = 100.0
    w_pr: float = 5000.0
    k_s: float = 0.015
    k_n: float = 0.5
    d_snr: float = 200.0

    def __post_init__(self):
        for name in ("w_n", "w_v", "w_pr", "k_s", "k_n", "d_snr"):
            check_positive(getattr(self, name), name, strict=False)

    def scaled(self, factor):
        """Same ellipse and sensor range with all three weights multiplied by ``factor``."""
        return CostWeights(self.w_n * factor, self.w_v * factor, self.w_pr * factor, self.k_s, self.k_n,
                           self.d_snr)


def filter_in_range(prediction: Prediction, s_ego, d_snr, track: TrackGeometry | None = None) -> Prediction:
    """Opponents whose longitudinal distance to the ego at ``t = 0`` is within ``d_snr``."""
    if len(prediction) == 0:
        return prediction
    if track is not None:
        d = track.signed_distance(s_ego, prediction.s[:, 0])
    else:
        d = prediction.s[:, 0] - s_ego
    keep = np.abs(d) <= d_snr
    return Prediction(prediction.s[keep], prediction.n[keep])


def prediction_term(s, n, prediction: Prediction, k_s=0.015, k_n=0.5, track: TrackGeometry | None = None):
    """Sum of elliptic Gaussian bumps centred on the predicted opponents.

    ``s`` and ``n`` are ``(C, N)`` (or broadcastable); the result has the
    same shape. Longitudinal offsets are wrapped on closed tracks.
    """
    s = np.asarray(s, dtype=float)
    n = np.asarray(n, dtype=float)
    out = np.zeros(np.broadcast_shapes(s.shape, n.shape))
    for m in range(len(prediction)):
        ds = prediction.s[m] - s
        if track is not None and track.closed:
            ds = track.signed_distance(s, prediction.s[m])
        dn = prediction.n[m] - n
        out += np.exp(-k_s * ds**2 - k_n * dn**2)
    return out


def racing_line_speed(rl, t, track: TrackGeometry, flat=False):
    """In-plane speed of the racing line at times ``t`` through the full transform."""
    r = rl.state_at(t)
    pts = track.evaluate(r.s)
    return road_kinematics(pts, r.s_dot, r.s_ddot, r.n, r.n_dot, r.n_ddot, flat=flat).v


def total_cost(cands, rl, prediction: Prediction, weights: CostWeights, track: TrackGeometry | None = None,
               v_rl=None):
    """Rectangle-rule cost per candidate (left endpoints, weight ``T / N``)."""
    t = cands.t
    N = t.size
    T = cands.T
    r = rl.state_at(t)
    if v_rl is None:
        v_rl = racing_line_speed(rl, t, track)
    if np.any(v_rl <= 0.0):
        raise SelectionError("racing line speed is zero at a cost evaluation point")
    dn = r.n - cands.n
    dv = v_rl - cands.kin.v
    d_pr = prediction_term(cands.s, cands.n, prediction, weights.k_s, weights.k_n, track)
    integrand = weights.w_n * dn**2 + weights.w_v * dv**2 / v_rl**2 + weights.w_pr * d_pr
    return integrand.sum(axis=1) * (T / N)


def select(costs, feasible, fallback=None):
    """``(index, used_fallback)``: argmin cost over ``feasible`` (lowest index on ties)."""
    feasible = np.asarray(feasible, dtype=int)
    if feasible.size:
        c = np.asarray(costs, dtype=float)[feasible]
        tied = np.flatnonzero(c <= c.min() + COST_TIE_TOL)
        return int(feasible[tied].min()), False
    if fallback is None:
        raise SelectionError("no feasible candidate and no fallback")
    return int(fallback), True
