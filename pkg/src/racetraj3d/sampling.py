"""End-state sampling for the longitudinal and lateral motion primitives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .racingline import reparam_lateral
from .track3d import TrackGeometry
from .validation import SamplingError, check_positive

DEDUP_REL_TOL = 1e-9


@dataclass(frozen=True)
class VehicleState:
    """Curvilinear ego state; ``s_0`` may be unwrapped on closed tracks."""

    s_0: float
    s_dot_0: float
    s_ddot_0: float = 0.0
    n_0: float = 0.0
    n_dot_0: float = 0.0
    n_ddot_0: float = 0.0

    def __post_init__(self):
        vals = [float(getattr(self, f)) for f in self.__dataclass_fields__]
        if not np.all(np.isfinite(vals)):
            raise ValueError("vehicle state must be finite")
        if self.s_dot_0 < 0.0:
            raise ValueError("s_dot_0 must be non-negative")

    def as_array(self):
        return np.array([self.s_0, self.s_dot_0, self.s_ddot_0, self.n_0, self.n_dot_0, self.n_ddot_0])


class LongitudinalSample(NamedTuple):
    s_dot_e: float
    s_ddot_e: float
    is_racing_line_sample: bool


class LateralSample(NamedTuple):
    n_e: float
    n_dot_e: float
    n_ddot_e: float
    is_racing_line_sample: bool


def proximity_weight(s_dot_0, s_dot_rl_0, s_dot_e, s_dot_rl_T, s0_thr):
    """Blend factor in ``[0, 1]`` for the sampled end acceleration.

    It decays linearly with the relative deviation of the start speed and of
    the sampled end speed from the racing line, reaching zero at ``s0_thr``.
    """
    s0_thr = check_positive(s0_thr, "s0_thr")

    def closeness(x, ref):
        x = np.asarray(x, dtype=float)
        if ref <= 0.0:
            return np.where(x == ref, 1.0, 0.0)
        return np.clip(1.0 - np.abs(x - ref) / (s0_thr * ref), 0.0, 1.0)

    return closeness(s_dot_0, s_dot_rl_0) * closeness(s_dot_e, s_dot_rl_T)


def longitudinal_arrays(state: VehicleState, rl, T, N_sdot=40, K_sdot=1.2, s0_thr=0.3):
    """Vectorized longitudinal samples: ``(s_dot_e, s_ddot_e, is_rl)`` arrays."""
    if int(N_sdot) < 2:
        raise SamplingError("N_sdot must be at least 2")
    if not K_sdot > 1.0:
        raise SamplingError("K_sdot must exceed 1")
    rl0 = rl.state_at(0.0)
    rlT = rl.state_at(T)
    v_T = float(rlT.s_dot)
    if v_T <= 0.0:
        raise SamplingError("racing line is stationary at the horizon end")
    grid = np.linspace(0.0, v_T * K_sdot, int(N_sdot))
    spacing = grid[1] - grid[0]
    close = np.abs(grid - v_T) <= DEDUP_REL_TOL * spacing
    if np.any(close):
        grid[np.argmax(close)] = v_T
        sd = grid
    else:
        sd = np.sort(np.append(grid, v_T))
    is_rl = sd == v_T
    lam = proximity_weight(state.s_dot_0, float(rl0.s_dot), sd, v_T, s0_thr)
    sdd = lam * float(rlT.s_ddot)
    # the racing-line sample carries the exact terminal acceleration
    sdd[is_rl] = float(rlT.s_ddot)
    return sd, sdd, is_rl


def sample_longitudinal(state: VehicleState, rl, T, N_sdot=40, K_sdot=1.2, s0_thr=0.3):
    sd, sdd, is_rl = longitudinal_arrays(state, rl, T, N_sdot, K_sdot, s0_thr)
    return [LongitudinalSample(float(a), float(b), bool(c)) for a, b, c in zip(sd, sdd, is_rl)]


def lateral_arrays(s_e, s_dot_e, s_ddot_e, rl, track: TrackGeometry, N_n=15, d_w=1.93):
    """Vectorized lateral samples for ``I`` longitudinal end states.

    Returns ``(n, n_dot, n_ddot, is_rl, keep)`` of shape ``(I, N_n + 1)``;
    the racing-line sample is the last column and ``keep`` is False for grid
    entries that duplicate it.
    """
    if int(N_n) < 2:
        raise SamplingError("N_n must be at least 2")
    s_e = np.atleast_1d(np.asarray(s_e, dtype=float))
    s_dot_e = np.broadcast_to(np.asarray(s_dot_e, dtype=float), s_e.shape)
    s_ddot_e = np.broadcast_to(np.asarray(s_ddot_e, dtype=float), s_e.shape)
    pts = track.evaluate(s_e)
    lo = pts.n_r + 0.5 * d_w
    hi = pts.n_l - 0.5 * d_w
    if np.any(lo > hi):
        raise SamplingError("track narrower than the vehicle width at a sampled end position")
    rl_n, rl_nd, rl_ndd = reparam_lateral(rl, s_e, s_dot_e, s_ddot_e)
    frac = np.linspace(0.0, 1.0, int(N_n))
    grid = lo[:, None] + frac[None, :] * (hi - lo)[:, None]

    lo_d = (pts.dn_r * s_dot_e)[:, None]
    hi_d = (pts.dn_l * s_dot_e)[:, None]
    ref = np.clip(rl_n, lo, hi)[:, None]
    below = grid <= ref
    w_lo = np.where(below, (grid - lo[:, None]) / np.maximum(ref - lo[:, None], 1e-12), 0.0)
    w_hi = np.where(below, 0.0, (grid - ref) / np.maximum(hi[:, None] - ref, 1e-12))
    nd = np.where(below, lo_d + w_lo * (rl_nd[:, None] - lo_d), rl_nd[:, None] + w_hi * (hi_d - rl_nd[:, None]))
    ndd = np.where(below, w_lo * rl_ndd[:, None], (1.0 - w_hi) * rl_ndd[:, None])

    spacing = (hi - lo) / (int(N_n) - 1)
    dup = np.abs(grid - rl_n[:, None]) <= DEDUP_REL_TOL * np.maximum(spacing, 1e-12)[:, None]
    n_all = np.concatenate([grid, rl_n[:, None]], axis=1)
    nd_all = np.concatenate([nd, rl_nd[:, None]], axis=1)
    ndd_all = np.concatenate([ndd, rl_ndd[:, None]], axis=1)
    is_rl = np.zeros(n_all.shape, dtype=bool)
    is_rl[:, -1] = True
    keep = np.concatenate([~dup, np.ones((s_e.size, 1), dtype=bool)], axis=1)
    return n_all, nd_all, ndd_all, is_rl, keep


def sample_lateral(s_e, s_dot_e, s_ddot_e, rl, track: TrackGeometry, N_n=15, d_w=1.93):
    """Lateral end samples for one longitudinal curve ending at ``(s_e, s_dot_e, s_ddot_e)``.

    Grid values travel parallel to the nearer boundary at the interval ends
    and match the racing line at its own terminal offset, with linear
    interpolation in between. The racing-line sample comes last.
    """
    n, nd, ndd, is_rl, keep = lateral_arrays(s_e, s_dot_e, s_ddot_e, rl, track, N_n, d_w)
    return [
        LateralSample(float(a), float(b), float(c), bool(d))
        for a, b, c, d, k in zip(n[0], nd[0], ndd[0], is_rl[0], keep[0])
        if k
    ]
