"""Candidate trajectory generation and the curvilinear-to-Cartesian transform.

Candidates are stored as arrays of shape ``(C, N)`` over a shared time grid.
Longitudinal curves are quartics (free end position), lateral curves are
quintics. In relative mode the polynomial describes the residual against the
racing line, which is added back afterwards, so a vehicle on the racing line
reproduces it exactly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kinematics import Kinematics, road_kinematics
from .polynomials import (
    Poly4,
    Poly5,
    jerk_cost,
    poly_eval,
    quartic,
    quartic_coeffs,
    quintic,
    quintic_coeffs,
)
from .racingline import reparam_lateral
from .sampling import VehicleState, lateral_arrays
from .track3d import TrackGeometry, rotation_matrix
from .validation import RacingLineError, TransformDomainError

__all__ = [
    "Poly4",
    "Poly5",
    "quartic",
    "quintic",
    "jerk_cost",
    "CandidateSet",
    "generate_candidates",
    "to_cartesian",
    "save_candidate_csv",
    "longitudinal_mode",
]

JERK_OPTIMAL = "jerk_optimal"
RELATIVE = "relative"
CSV_COLUMNS = ("t", "s", "s_dot", "s_ddot", "n", "n_dot", "n_ddot", "x", "y", "z", "v", "chi_hat",
               "ax_hat", "ay_hat", "kappa_hat", "ax_tilde", "ay_tilde", "g_tilde")


@dataclass(eq=False)
class CandidateSet:
    """Curvilinear candidates sampled at ``t``; Cartesian data once transformed.

    ``lat_relative`` marks the lateral variant (False: jerk-optimal quintic,
    True: racing-line relative); ``valid`` is False for kinematically
    meaningless candidates (negative ``s_dot``, outside the racing-line range,
    or beyond the curvature centre).
    """

    t: np.ndarray
    s: np.ndarray
    s_dot: np.ndarray
    s_ddot: np.ndarray
    n: np.ndarray
    n_dot: np.ndarray
    n_ddot: np.ndarray
    lon_index: np.ndarray
    lat_index: np.ndarray
    lat_relative: np.ndarray
    is_racing_line: np.ndarray
    valid: np.ndarray
    lon_mode: str
    lon_coeffs: np.ndarray
    lat_coeffs: np.ndarray
    rl: object
    T: float
    kin: Kinematics | None = None
    position: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.s.shape[0]

    def state_at(self, index: int, t: float) -> VehicleState:
        """Exact curvilinear state of candidate ``index`` at time ``t``."""
        lon = poly_eval(self.lon_coeffs[self.lon_index[index]], t)
        s, sd, sdd = (float(x) for x in lon)
        if self.lon_mode == RELATIVE:
            r = self.rl.state_at(t)
            s, sd, sdd = s + float(r.s), sd + float(r.s_dot), sdd + float(r.s_ddot)
        n, nd, ndd = (float(x) for x in poly_eval(self.lat_coeffs[index], t))
        if self.lat_relative[index]:
            rn, rnd, rndd = reparam_lateral(self.rl, s, sd, sdd)
            n, nd, ndd = n + float(rn), nd + float(rnd), ndd + float(rndd)
        return VehicleState(s, sd, sdd, n, nd, ndd)


def lon_mode_requested(mode):
    if mode not in (RELATIVE, JERK_OPTIMAL):
        raise ValueError(f"unknown trajectory mode {mode!r}")
    return mode


def longitudinal_mode(state: VehicleState, rl, s0_thr, mode=RELATIVE) -> str:
    """Relative generation unless the start speed deviates too far from the line."""
    if lon_mode_requested(mode) == JERK_OPTIMAL:
        return JERK_OPTIMAL
    ref = float(rl.state_at(0.0).s_dot)
    if ref <= 0.0:
        return JERK_OPTIMAL
    return RELATIVE if abs(state.s_dot_0 - ref) / ref <= s0_thr else JERK_OPTIMAL


def _reparam_clamped(rl, s, sd, sdd):
    """Lateral re-timing with out-of-range positions clamped; returns a mask of those."""
    lo, hi = rl.s[0], rl.s[-1]
    outside = (s < lo) | (s > hi)
    sc = np.clip(s, lo, hi)
    n, nd, ndd = reparam_lateral(rl, sc, np.maximum(sd, 0.0), sdd)
    return n, nd, ndd, outside


def generate_candidates(state: VehicleState, rl, lon_samples, T=3.0, track: TrackGeometry | None = None,
                        N_n=15, d_w=1.93, s0_thr=0.3, mode=RELATIVE, N=30) -> CandidateSet:
    """Curvilinear candidate set, ordered by longitudinal sample, lateral
    sample, then lateral variant (jerk-optimal before relative).

    ``mode="relative"`` builds relative longitudinal curves (jerk-optimal
    ones if the start speed deviates by more than ``s0_thr``) and both
    lateral variants. ``mode="jerk_optimal"`` uses jerk-optimal curves only.

    ``lon_samples`` is a ``(s_dot_e, s_ddot_e, is_rl)`` triple of arrays or a
    list of :class:`~racetraj3d.sampling.LongitudinalSample`.
    """
    if track is None:
        raise ValueError("track is required")
    if T > rl.horizon + 1e-9:
        raise RacingLineError(f"planning horizon {T} exceeds racing line horizon {rl.horizon}")
    if isinstance(lon_samples, list):
        sd_e = np.array([x.s_dot_e for x in lon_samples], dtype=float)
        sdd_e = np.array([x.s_ddot_e for x in lon_samples], dtype=float)
        lon_rl = np.array([x.is_racing_line_sample for x in lon_samples], dtype=bool)
    else:
        sd_e, sdd_e, lon_rl = (np.asarray(a) for a in lon_samples)
    t = np.linspace(0.0, T, int(N))
    r = rl.state_at(t)
    lon_mode = longitudinal_mode(state, rl, s0_thr, mode)

    if lon_mode == RELATIVE:
        lon_c = quartic_coeffs(state.s_0 - float(r.s[0]), state.s_dot_0 - float(r.s_dot[0]),
                               state.s_ddot_0 - float(r.s_ddot[0]), sd_e - float(r.s_dot[-1]),
                               sdd_e - float(r.s_ddot[-1]), T)
        s, sd, sdd = poly_eval(lon_c, t)
        s, sd, sdd = s + r.s, sd + r.s_dot, sdd + r.s_ddot
    else:
        lon_c = quartic_coeffs(state.s_0, state.s_dot_0, state.s_ddot_0, sd_e, sdd_e, T)
        s, sd, sdd = poly_eval(lon_c, t)
    I = s.shape[0]

    # racing-line lateral profile re-timed on each longitudinal curve
    rn, rnd, rndd, outside = _reparam_clamped(rl, s, sd, sdd)
    lon_ok = (np.min(sd, axis=1) >= 0.0) & ~np.any(outside, axis=1)

    # curves leaving the line's range are already invalid; clamp so sampling stays defined
    s_end = np.clip(s[:, -1], rl.s[0], rl.s[-1])
    n_e, nd_e, ndd_e, lat_rl, keep = lateral_arrays(s_end, np.maximum(sd[:, -1], 0.0), sdd[:, -1], rl, track, N_n, d_w)
    J = n_e.shape[1]
    jerk_c = quintic_coeffs(state.n_0, state.n_dot_0, state.n_ddot_0, n_e, nd_e, ndd_e, T)  # (I, J, 6)
    rel_c = quintic_coeffs((state.n_0 - rn[:, 0])[:, None], (state.n_dot_0 - rnd[:, 0])[:, None],
                           (state.n_ddot_0 - rndd[:, 0])[:, None], n_e - rn[:, -1:], nd_e - rnd[:, -1:],
                           ndd_e - rndd[:, -1:], T)
    # jerk-optimal mode reproduces the classic planner: no relative lateral curves either
    variants = (False,) if lon_mode_requested(mode) == JERK_OPTIMAL else (False, True)
    V = len(variants)
    lat_c = np.stack([jerk_c, rel_c][:V], axis=2)  # (I, J, V, 6)
    ln, lnd, lndd = poly_eval(lat_c.reshape(I, J * V, 6), t)  # (I, J*V, N)
    ln, lnd, lndd = (a.reshape(I, J, V, -1) for a in (ln, lnd, lndd))
    add = np.array(variants, dtype=float)[None, None, :, None]
    n = ln + add * rn[:, None, None, :]
    nd = lnd + add * rnd[:, None, None, :]
    ndd = lndd + add * rndd[:, None, None, :]

    C = I * J * V
    lon_index = np.repeat(np.arange(I), J * V)
    lat_index = np.tile(np.repeat(np.arange(J), V), I)
    lat_relative = np.tile(np.array(variants), I * J)
    keep_flat = np.repeat(keep.reshape(-1), V)
    is_rl = lon_rl[lon_index] & lat_rl.reshape(-1).repeat(V) & (lat_relative | (V == 1))

    def rep(a):
        return np.repeat(a, J * V, axis=0)

    cands = CandidateSet(
        t=t,
        s=rep(s),
        s_dot=rep(sd),
        s_ddot=rep(sdd),
        n=n.reshape(C, -1),
        n_dot=nd.reshape(C, -1),
        n_ddot=ndd.reshape(C, -1),
        lon_index=lon_index,
        lat_index=lat_index,
        lat_relative=lat_relative,
        is_racing_line=is_rl,
        valid=rep(lon_ok),
        lon_mode=lon_mode,
        lon_coeffs=lon_c,
        lat_coeffs=lat_c.reshape(C, 6),
        rl=rl,
        T=float(T),
    )
    if not np.all(keep_flat):
        cands = subset(cands, np.flatnonzero(keep_flat))
    return cands


def subset(cands: CandidateSet, idx) -> CandidateSet:
    """Candidates ``idx`` (in the given order) as a new set."""
    idx = np.asarray(idx, dtype=int)
    per = ("s", "s_dot", "s_ddot", "n", "n_dot", "n_ddot", "lon_index", "lat_index", "lat_relative",
           "is_racing_line", "valid", "lat_coeffs")
    kw = {name: getattr(cands, name)[idx] for name in per}
    kin = None
    if cands.kin is not None:
        kin = _take_kin(cands.kin, idx)
    pos = cands.position[idx] if cands.position is not None else None
    return CandidateSet(t=cands.t, lon_mode=cands.lon_mode, lon_coeffs=cands.lon_coeffs, rl=cands.rl,
                        T=cands.T, kin=kin, position=pos, meta=dict(cands.meta), **kw)


def _take_kin(kin: Kinematics, idx):
    app = type(kin.apparent)(*(a[idx] for a in kin.apparent))
    return kin._replace(**{f: getattr(kin, f)[idx] for f in kin._fields if f != "apparent"}, apparent=app)


def to_cartesian(cands: CandidateSet, track: TrackGeometry, flat=False, strict=False) -> CandidateSet:
    """Attach positions and velocity-frame kinematics in place.

    With ``flat=True`` accelerations are evaluated as if the road were level.
    Candidates with a point beyond the instantaneous curvature centre are
    marked invalid, or raise with ``strict=True``.
    """
    pts = track.evaluate(cands.s)
    kin = road_kinematics(pts, cands.s_dot, cands.s_ddot, cands.n, cands.n_dot, cands.n_ddot, flat=flat)
    domain = np.all(kin.domain_ok, axis=1)
    if strict and not np.all(domain):
        raise TransformDomainError("point beyond the curvature centre of the reference line (1 - n*Omega_z <= 0)")
    normal = rotation_matrix(pts.theta, pts.mu, pts.phi)[..., :, 1]
    cands.position = pts.position + cands.n[..., None] * normal
    cands.kin = kin
    cands.valid = cands.valid & domain
    return cands


def save_candidate_csv(cands: CandidateSet, index: int, dest) -> None:
    """Debug dump of one transformed candidate."""
    if cands.kin is None:
        raise ValueError("candidate set has not been transformed")
    k = cands.kin
    cols = [cands.t, cands.s[index], cands.s_dot[index], cands.s_ddot[index], cands.n[index],
            cands.n_dot[index], cands.n_ddot[index], *cands.position[index].T, k.v[index], k.chi_hat[index],
            k.ax_hat[index], k.ay_hat[index], k.kappa_hat[index], *(a[index] for a in k.apparent)]
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for row in np.column_stack(cols):
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    Path(dest).write_text(buf.getvalue(), encoding="utf-8")
