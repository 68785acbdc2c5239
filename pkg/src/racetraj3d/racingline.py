"""Time-parameterized racing lines and the speed profiler that builds them.

A racing line is a list of time-ordered nodes ``(t, s, s_dot, s_ddot, n,
n_dot, n_ddot)`` evaluated by linear interpolation. Lines are produced by a
forward-backward quasi-steady-state profiler along a lateral path ``n(s)``
using a margin-reduced gg envelope, either for a closed lap (offline) or from
the current vehicle state over a finite horizon (online).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.ndimage import gaussian_filter1d

from . import _profile_kernels as kern
from .ggenvelope import (
    ENVELOPE_FLOOR,
    GgLookup,
    apparent_accels,
    check_accel,
    query,
    scale_for_racing_line,
)
from .kinematics import flatten, road_kinematics
from .polynomials import poly_eval, quintic_coeffs
from .track3d import TrackGeometry
from .validation import RacingLineError, check_fraction, check_positive

CSV_COLUMNS = ("t", "s", "s_dot", "s_ddot", "n", "n_dot", "n_ddot")
T_TOL = 1e-9
VERIFY_TOL = 1e-9
DEFAULT_SPEED_CAP = 150.0


class RLState(NamedTuple):
    t: np.ndarray
    s: np.ndarray
    s_dot: np.ndarray
    s_ddot: np.ndarray
    n: np.ndarray
    n_dot: np.ndarray
    n_ddot: np.ndarray


@dataclass(frozen=True, eq=False)
class RacingLine:
    """Racing line nodes; ``s`` is unwrapped (it may exceed the track length).

    ``lap_length`` is set for closed laps, where the last node repeats the
    first one a lap later.
    """

    t: np.ndarray
    s: np.ndarray
    s_dot: np.ndarray
    s_ddot: np.ndarray
    n: np.ndarray
    n_dot: np.ndarray
    n_ddot: np.ndarray
    lap_length: float | None = None
    start_excess: float = 0.0

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, f), dtype=float) for f in CSV_COLUMNS]
        size = arrays[0].size
        if size < 2 or any(a.ndim != 1 or a.size != size for a in arrays):
            raise RacingLineError("racing line needs at least two nodes of equal-length 1-D fields")
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise RacingLineError("racing line contains non-finite values")
        t, s, s_dot = arrays[0], arrays[1], arrays[2]
        if abs(t[0]) > T_TOL or np.any(np.diff(t) <= 0.0):
            raise RacingLineError("time must start at 0 and increase strictly")
        if np.any(np.diff(s) <= 0.0):
            raise RacingLineError("s must increase strictly along the line")
        if np.any(s_dot[1:] <= 0.0) or s_dot[0] < 0.0:
            raise RacingLineError("s_dot must be positive (except possibly at the start)")
        for name, arr in zip(CSV_COLUMNS, arrays):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def horizon(self) -> float:
        return float(self.t[-1])

    @property
    def closed(self) -> bool:
        return self.lap_length is not None

    def state_at(self, t) -> RLState:
        """Linear interpolation of all fields; ``t`` must lie in ``[0, horizon]``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < -T_TOL) or np.any(t > self.horizon + T_TOL):
            raise RacingLineError(f"time outside racing line range [0, {self.horizon}]")
        t = np.clip(t, 0.0, self.horizon)
        i = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, self.t.size - 2)
        w = (t - self.t[i]) / (self.t[i + 1] - self.t[i])
        vals = [getattr(self, f)[i] + w * (getattr(self, f)[i + 1] - getattr(self, f)[i]) for f in CSV_COLUMNS[1:]]
        return RLState(t, *vals)

    def time_at(self, s) -> np.ndarray:
        """Inverse of ``s(t)`` by monotone linear interpolation."""
        s = np.asarray(s, dtype=float)
        span = self.s[-1] - self.s[0]
        tol = 1e-9 * max(1.0, abs(span))
        if np.any(s < self.s[0] - tol) or np.any(s > self.s[-1] + tol):
            raise RacingLineError(
                f"s outside racing line range [{self.s[0]}, {self.s[-1]}] (no extrapolation)"
            )
        return np.interp(s, self.s, self.t)

    def speed_at_s(self, s) -> np.ndarray:
        """``s_dot`` as a function of arc length; wraps for closed laps."""
        s = np.asarray(s, dtype=float)
        if self.closed:
            s = self.s[0] + np.mod(s - self.s[0], self.lap_length)
        return np.interp(s, self.s, self.s_dot)

    def anchored(self, s0: float) -> RacingLine:
        """Closed lap re-timed to start at arc length ``s0`` (one full lap).

        ``s0`` may be unwrapped; the returned line starts exactly at ``s0``.
        """
        if not self.closed:
            raise RacingLineError("only closed racing lines can be re-anchored")
        L = self.lap_length
        lap = self.horizon
        base = self.s[0]
        k = math.floor((s0 - base) / L)
        local = s0 - k * L
        if local >= base + L:
            local -= L
            k += 1
        tau = float(np.interp(local, self.s, self.t))
        fields = {f: getattr(self, f) for f in CSV_COLUMNS}
        two = {
            "t": np.concatenate([fields["t"], fields["t"][1:] + lap]),
            "s": np.concatenate([fields["s"], fields["s"][1:] + L]),
        }
        for f in CSV_COLUMNS[2:]:
            two[f] = np.concatenate([fields[f], fields[f][1:]])
        inner = (two["t"] > tau + T_TOL) & (two["t"] < tau + lap - T_TOL)
        ends = np.array([tau, tau + lap])
        out = {}
        for f in CSV_COLUMNS:
            edge = np.interp(ends, two["t"], two[f])
            out[f] = np.concatenate([[edge[0]], two[f][inner], [edge[1]]])
        out["t"] = out["t"] - tau
        out["t"][0] = 0.0
        out["s"] = out["s"] + k * L
        out["s"][0] = s0
        out["s"][-1] = s0 + L
        return RacingLine(**out, lap_length=L)

    def to_csv(self, dest) -> None:
        buf = io.StringIO()
        if self.closed:
            buf.write(f"# lap_length={self.lap_length!r}\n")
        buf.write(",".join(CSV_COLUMNS) + "\n")
        data = np.column_stack([getattr(self, f) for f in CSV_COLUMNS])
        for row in data:
            buf.write(",".join(repr(float(x)) for x in row) + "\n")
        Path(dest).write_text(buf.getvalue(), encoding="utf-8")


def load_racing_line(source) -> RacingLine:
    """Read a racing-line CSV (``t,s,s_dot,s_ddot,n,n_dot,n_ddot``)."""
    text = Path(source).read_text(encoding="utf-8") if isinstance(source, (str, Path)) else source.read()
    lap_length = None
    rows = []
    header = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "lap_length=" in line:
                lap_length = float(line.split("lap_length=", 1)[1])
            continue
        if header is None:
            header = tuple(c.strip() for c in line.split(","))
            if header != CSV_COLUMNS:
                raise RacingLineError(f"line {lineno}: expected header {','.join(CSV_COLUMNS)}")
            continue
        try:
            vals = [float(x) for x in line.split(",")]
        except ValueError:
            raise RacingLineError(f"line {lineno}: non-numeric field") from None
        if len(vals) != len(CSV_COLUMNS):
            raise RacingLineError(f"line {lineno}: expected {len(CSV_COLUMNS)} fields")
        rows.append(vals)
    if header is None:
        raise RacingLineError("empty racing line file")
    data = np.array(rows, dtype=float).reshape(-1, len(CSV_COLUMNS))
    return RacingLine(*data.T, lap_length=lap_length)


def reparam_lateral(rl, s, s_dot, s_ddot):
    """Racing-line lateral profile re-timed onto a longitudinal curve.

    For a curve with position ``s`` and derivatives, returns ``(n, n_dot,
    n_ddot)`` of ``n_rl`` composed with the inverse ``s_rl^-1(s)``. ``rl``
    needs ``time_at(s)`` and ``state_at(t)``.
    """
    tau = rl.time_at(s)
    st = rl.state_at(tau)
    ratio = st.n_dot / st.s_dot
    n_dot = ratio * s_dot
    n_ddot = (st.n_ddot / st.s_dot**2 - st.n_dot * st.s_ddot / st.s_dot**3) * s_dot**2 + ratio * s_ddot
    return st.n, n_dot, n_ddot


# --------------------------------------------------------------------------- paths


def _periodic_gradient(values, s, closed):
    if not closed:
        return np.gradient(values, s)
    L = s[-1] - s[0]
    v = values[:-1]
    x = s[:-1]
    vp = np.concatenate([v[-1:], v, v[:1]])
    xp = np.concatenate([x[-1:] - L, x, x[:1] + L])
    h0 = xp[1:-1] - xp[:-2]
    h1 = xp[2:] - xp[1:-1]
    d = (vp[2:] - vp[1:-1]) * h0 / (h1 * (h0 + h1)) + (vp[1:-1] - vp[:-2]) * h1 / (h0 * (h0 + h1))
    return np.append(d, d[0])


@dataclass(frozen=True, eq=False)
class LateralPath:
    """Lateral offset ``n(s)`` on the track's arc-length grid."""

    s: np.ndarray
    n: np.ndarray
    closed: bool
    dn: np.ndarray = field(init=False, repr=False)
    ddn: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        n = np.asarray(self.n, dtype=float)
        if s.shape != n.shape or s.ndim != 1 or s.size < 3:
            raise RacingLineError("path needs matching 1-D s and n arrays")
        if self.closed:
            n = n.copy()
            n[-1] = n[0]
        dn = _periodic_gradient(n, s, self.closed)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "dn", dn)
        object.__setattr__(self, "ddn", _periodic_gradient(dn, s, self.closed))

    def evaluate(self, s):
        """``(n, dn/ds, d2n/ds2)`` at arc length ``s`` (wrapped if closed)."""
        s = np.asarray(s, dtype=float)
        if self.closed:
            s = self.s[0] + np.mod(s - self.s[0], self.s[-1] - self.s[0])
        return tuple(np.interp(s, self.s, a) for a in (self.n, self.dn, self.ddn))


def centerline_path(track: TrackGeometry) -> LateralPath:
    return LateralPath(track.s, 0.5 * (track.n_l + track.n_r), track.closed)


def apex_path(track: TrackGeometry, amplitude=4.0, smoothing=15.0, curvature_ref=0.01) -> LateralPath:
    """Path leaning towards the inside of each turn.

    The offset follows ``amplitude * tanh(Omega_z / curvature_ref)``, smoothed
    with a Gaussian of ``smoothing`` metres and centred between the bounds.
    """
    amplitude = check_positive(amplitude, "amplitude", strict=False)
    smoothing = check_positive(smoothing, "smoothing")
    yaw = track.omega_nodes[:, 2]
    raw = amplitude * np.tanh(yaw / curvature_ref)
    ds = float(np.mean(np.diff(track.s)))
    sigma = smoothing / ds
    if track.closed:
        raw = np.append(gaussian_filter1d(raw[:-1], sigma, mode="wrap"), 0.0)
        raw[-1] = raw[0]
    else:
        raw = gaussian_filter1d(raw, sigma, mode="nearest")
    centre = 0.5 * (track.n_l + track.n_r)
    return LateralPath(track.s, centre + raw, track.closed)


# --------------------------------------------------------------------------- profiler


@dataclass(frozen=True)
class RacingLineMargins:
    """Safety margins applied when generating racing lines.

    ``lat_reserve`` keeps a fraction of the lateral limit unused at the
    steady-state speed bound so that some longitudinal acceleration remains
    available at apexes; ``v_max`` caps the speed (vehicle top speed).
    """

    d_s_rl: float = 0.5
    d_w: float = 1.93
    a_mgn: float = 0.1
    a_abs_mgn: float = 0.8
    lat_reserve: float = 0.02
    v_max: float = DEFAULT_SPEED_CAP

    def __post_init__(self):
        check_positive(self.d_s_rl, "d_s_rl", strict=False)
        check_positive(self.d_w, "d_w", strict=False)
        check_fraction(self.a_mgn, "a_mgn")
        check_positive(self.a_abs_mgn, "a_abs_mgn", strict=False)
        check_fraction(self.lat_reserve, "lat_reserve")
        check_positive(self.v_max, "v_max")


class PathProfile(NamedTuple):
    """Profiler output on its node grid."""

    s: np.ndarray
    n: np.ndarray
    dn: np.ndarray
    ddn: np.ndarray
    kappa_hat: np.ndarray
    v: np.ndarray
    s_dot: np.ndarray
    s_ddot: np.ndarray
    v_limit: np.ndarray


def _check_path_bounds(track, s, n, margins, skip=0):
    n_l, n_r = track.bounds_at(s)
    half = 0.5 * margins.d_w + margins.d_s_rl
    bad = np.flatnonzero((n[skip:] > n_l[skip:] - half) | (n[skip:] < n_r[skip:] + half)) + skip
    if bad.size:
        raise RacingLineError(
            f"path leaves the margined track bounds for s in [{s[bad[0]]:.3f}, {s[bad[-1]]:.3f}]"
        )


def _affine_coefficients(points, n, dn, ddn, flat):
    """Apparent-acceleration coefficients: ``a = base + s_ddot*c1 + s_dot**2*c2``."""
    if flat:
        points = flatten(points)
    one = np.ones_like(n)
    zero = np.zeros_like(n)

    def apparent(sd, sdd):
        kin = road_kinematics(points, sd, sdd, n, dn * sd, ddn * sd**2 + dn * sdd)
        return kin, np.stack(kin.apparent, axis=-1)

    kin, k10 = apparent(one, zero)
    _, k11 = apparent(one, one)
    grav = apparent_accels(zero, zero, zero, kin.chi_hat, points, zero, zero)
    base = np.stack(grav, axis=-1)
    c1 = k11 - k10
    c2 = k10 - base
    gain = kin.v
    if not np.all(kin.domain_ok):
        raise RacingLineError("path crosses the curvature centre of the reference line")
    return base, c1, c2, gain, kin.kappa_hat


def _tables(gg: GgLookup):
    return np.stack([gg.ax_min, gg.ax_max, gg.ay_max, gg.p])


def _verify(points, s, n, dn, ddn, sd, sdd, gg, margins, flat, skip_last, skip_first=False):
    kin = road_kinematics(points, sd, sdd, n, dn * sd, ddn * sd**2 + dn * sdd, flat=flat)
    shape = scale_for_racing_line(query(gg, kin.v, kin.apparent.g_tilde), margins.a_mgn, margins.a_abs_mgn)
    # recomputing s_ddot from node speeds may round just past a limit
    ok = check_accel(shape, kin.apparent).worst >= -VERIFY_TOL
    if skip_last:
        ok[-1] = True
    if skip_first:
        ok[0] = True
    bad = np.flatnonzero(~ok)
    if bad.size:
        raise RacingLineError(
            f"speed profile violates the margined envelope for s in [{s[bad[0]]:.3f}, {s[bad[-1]]:.3f}]"
        )


def _solve_profile(track, gg, s, n, dn, ddn, margins, flat, closed, sd_start=None, sd_end=None,
                   sd_cap=None, max_iter=100):
    points = track.evaluate(s)
    base, c1, c2, gain, kappa = _affine_coefficients(points, n, dn, ddn, flat)
    args = (base, c1, c2, gain, gg.v_grid, gg.g_grid, _tables(gg), margins.a_mgn, margins.a_abs_mgn,
            ENVELOPE_FLOOR)
    limit = kern.max_speed(*args, margins.lat_reserve, margins.v_max)
    low = np.flatnonzero(limit * gain < 0.5)
    if low.size:
        raise RacingLineError(
            f"path infeasible at low speed for s in [{s[low[0]]:.3f}, {s[low[-1]]:.3f}]"
        )
    sd = limit.copy()
    if sd_cap is not None:
        sd = np.minimum(sd, sd_cap)
    ds = np.diff(s)
    excess = 0.0
    if closed:
        for _ in range(max_iter):
            old = sd.copy()
            sd[0] = sd[-1] = min(sd[0], sd[-1])
            kern.backward_pass(sd, ds, *args, 0)
            sd[-1] = min(sd[-1], sd[0])
            kern.backward_pass(sd, ds, *args, 0)
            kern.forward_pass(sd, ds, *args, 0)
            sd[0] = min(sd[0], sd[-1])
            kern.forward_pass(sd, ds, *args, 0)
            if np.max(np.abs(sd - old)) < 1e-6 and sd[0] == sd[-1]:
                break
        else:
            raise RacingLineError("closed-lap speed profile did not converge")
    else:
        if sd_end is not None:
            sd[-1] = min(sd[-1], sd_end)
        kern.backward_pass(sd, ds, *args, 0)
        if sd_start is not None:
            excess = max(0.0, sd_start - sd[0])
            sd[0] = sd_start
        # a start above the bound is pulled down within the first segment
        kern.forward_pass(sd, ds, *args, 1 if excess > 0.0 else 0)
    sdd = np.empty_like(sd)
    sdd[:-1] = (sd[1:] ** 2 - sd[:-1] ** 2) / (2.0 * ds)
    sdd[-1] = sdd[0] if closed else sdd[-2]
    _verify(points, s, n, dn, ddn, sd, sdd, gg, margins, flat, skip_last=not closed, skip_first=excess > 0.0)
    profile = PathProfile(s, n, dn, ddn, kappa, sd * gain, sd, sdd, limit * gain)
    return profile, excess


def _line_from_profile(profile: PathProfile, lap_length=None, start_excess=0.0) -> RacingLine:
    sd, sdd = profile.s_dot, profile.s_ddot
    mean = sd[:-1] + sd[1:]
    if np.any(mean <= 0.0):
        raise RacingLineError("racing line stalls (zero speed on a segment)")
    dt = 2.0 * np.diff(profile.s) / mean
    t = np.concatenate([[0.0], np.cumsum(dt)])
    return RacingLine(
        t=t,
        s=profile.s,
        s_dot=sd,
        s_ddot=sdd,
        n=profile.n,
        n_dot=profile.dn * sd,
        n_ddot=profile.ddn * sd**2 + profile.dn * sdd,
        lap_length=lap_length,
        start_excess=start_excess,
    )


def profile_path(track: TrackGeometry, gg: GgLookup, path: LateralPath | None = None,
                 margins: RacingLineMargins | None = None, flat=False) -> PathProfile:
    """Closed-lap (flying lap) speed profile along ``path``."""
    if not track.closed:
        raise RacingLineError("offline racing lines need a closed track")
    margins = margins or RacingLineMargins()
    path = path or centerline_path(track)
    s = track.s
    n, dn, ddn = path.evaluate(s)
    _check_path_bounds(track, s, n, margins)
    profile, _ = _solve_profile(track, gg, s, n, dn, ddn, margins, flat, closed=True)
    return profile


def offline_racing_line(track: TrackGeometry, gg: GgLookup, path: LateralPath | None = None,
                        margins: RacingLineMargins | None = None, flat=False) -> RacingLine:
    """Closed-lap racing line; ``flat=True`` profiles as if the road were level."""
    profile = profile_path(track, gg, path, margins, flat)
    return _line_from_profile(profile, lap_length=track.total_length)


def _horizon_nodes(track: TrackGeometry, s0, horizon):
    if track.closed:
        L = track.total_length
        k0 = math.floor(s0 / L)
        laps = np.arange(k0, k0 + int(math.ceil(horizon / L)) + 2)
        grid = (track.s[:-1][None, :] + L * laps[:, None]).ravel()
    else:
        horizon = min(horizon, track.total_length - s0)
        grid = track.s
    end = s0 + horizon
    # a very short first or last segment would imply spurious accelerations
    gap = 0.5 * float(np.median(np.diff(track.s)))
    inner = grid[(grid > s0 + gap) & (grid < end - gap)]
    return np.concatenate([[s0], inner, [end]])


def online_racing_line(track: TrackGeometry, gg: GgLookup, path: LateralPath | None, ego,
                       horizon=500.0, margins: RacingLineMargins | None = None, flat=False,
                       reference: RacingLine | None = None, blend_length=150.0,
                       cap_offset=0.1) -> RacingLine:
    """Racing line re-planned from the ego state over ``horizon`` metres.

    Laterally a quintic residual blends the ego offset back onto ``path``.
    ``blend_length`` may be a sequence of lengths; each is limited to two
    thirds of the horizon and the fastest resulting line is returned.
    Longitudinally the profile starts at the ego speed and acceleration and
    never exceeds ``reference`` (the stored lap profile) at the same arc
    length. Inside the blend the cap applies only while the ego is within
    ``cap_offset`` metres of the path, so tracking drift cannot be turned into
    speed; the reference speed also bounds the horizon end. If the ego is faster than the braking bound at
    its position, the line returns to the bound within the first segment and
    ``start_excess`` records the difference.
    """
    margins = margins or RacingLineMargins()
    path = path or centerline_path(track)
    horizon = check_positive(horizon, "horizon")
    s0 = float(ego.s_0)
    if not track.closed and not 0.0 <= s0 < track.total_length:
        raise RacingLineError("ego outside the track")
    n_l0, n_r0 = track.bounds_at(s0)
    if not n_r0 <= ego.n_0 <= n_l0:
        raise RacingLineError(f"ego lateral offset {ego.n_0} outside track bounds")
    s = _horizon_nodes(track, s0, horizon)
    n_p, dn_p, ddn_p = (np.array(a) for a in path.evaluate(s))
    sd0 = max(float(ego.s_dot_0), 1.0)
    e0 = float(ego.n_0) - n_p[0]
    e1 = float(ego.n_dot_0) / sd0 - dn_p[0]
    e2 = (float(ego.n_ddot_0) - float(ego.n_dot_0) / sd0 * float(ego.s_ddot_0)) / sd0**2 - ddn_p[0]
    on_path_start = e0 == 0.0 and e1 == 0.0 and e2 == 0.0
    lengths = np.atleast_1d(np.asarray(blend_length, dtype=float))
    if on_path_start:
        lengths = lengths[:1]
    ref = reference.speed_at_s(s) if reference is not None else None

    best = None
    error = None
    for length in lengths:
        # an infinite length keeps the current offset and only blends out its rates
        parallel = not np.isfinite(length)
        blend = min(float(lengths[0]) if parallel else float(length), 2.0 * (s[-1] - s0) / 3.0)
        in_blend = np.ones_like(s, dtype=bool) if parallel else s - s0 < blend
        n, dn, ddn = n_p.copy(), dn_p.copy(), ddn_p.copy()
        if blend > 0.0 and not on_path_start:
            target = e0 if parallel else 0.0
            coeffs = quintic_coeffs(e0, e1, e2, target, 0.0, 0.0, blend)
            r, r1, r2 = poly_eval(coeffs, np.minimum(s - s0, blend))
            n += np.where(in_blend, r, 0.0)
            dn += np.where(in_blend, r1, 0.0)
            ddn += np.where(in_blend, r2, 0.0)
        else:
            in_blend = np.zeros_like(s, dtype=bool)
        cap = None
        if ref is not None:
            cap = ref if abs(e0) <= cap_offset else np.where(in_blend, np.inf, ref)
        try:
            skip = int(np.count_nonzero(s - s0 < blend)) if e0 != 0.0 else 0
            _check_path_bounds(track, s, n, margins, skip=skip)
            profile, excess = _solve_profile(track, gg, s, n, dn, ddn, margins, flat, closed=False,
                                             sd_start=float(ego.s_dot_0),
                                             sd_end=None if ref is None else float(ref[-1]), sd_cap=cap)
        except RacingLineError as err:
            error = err
            continue
        # start from the ego's acceleration so relative curves begin with zero residual;
        # a segment-wise constant value here feeds back into the next cycle's start state
        sdd = profile.s_ddot.copy()
        sdd[0] = float(ego.s_ddot_0)
        line = _line_from_profile(profile._replace(s_ddot=sdd), start_excess=excess)
        if best is None or line.horizon < best.horizon:
            best = line
    if best is None:
        raise error
    return best
