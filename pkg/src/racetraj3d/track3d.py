"""Closed 3D race tracks described by a reference line with a moving road frame.

The road frame at arc length ``s`` is the intrinsic z-y-x rotation
``Rz(theta) @ Ry(mu) @ Rx(phi)``; its columns are the tangent ``t``, the
lateral unit vector ``n`` (pointing left of travel) and the surface normal
``m = t x n``. Every per-sample quantity is linearly interpolated in ``s``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .validation import TrackFormatError, TrackValidationError

CSV_COLUMNS = ("s", "x", "y", "z", "theta", "mu", "phi", "n_l", "n_r")
CLOSURE_TOL = 1e-3
MIN_SPACING = 1e-6


class TrackSample(NamedTuple):
    s: float
    position: np.ndarray
    theta: float
    mu: float
    phi: float
    n_l: float
    n_r: float


@dataclass(frozen=True)
class RoadFrame:
    """Road frame at a single arc length."""

    t_vec: np.ndarray
    n_vec: np.ndarray
    m_vec: np.ndarray
    omega: np.ndarray
    euler: tuple[float, float, float]


class TrackPoints(NamedTuple):
    """Vectorized track quantities at arbitrary arc lengths."""

    position: np.ndarray  # (..., 3)
    theta: np.ndarray
    mu: np.ndarray
    phi: np.ndarray
    omega: np.ndarray  # (..., 3), rad/m
    domega: np.ndarray  # (..., 3), d(omega)/ds
    n_l: np.ndarray
    n_r: np.ndarray
    dn_l: np.ndarray
    dn_r: np.ndarray


def rotation_matrix(theta, mu, phi):
    """Stacked z-y-x rotation matrices, shape ``(..., 3, 3)``."""
    theta, mu, phi = np.broadcast_arrays(
        np.asarray(theta, float), np.asarray(mu, float), np.asarray(phi, float)
    )
    ct, st = np.cos(theta), np.sin(theta)
    cm, sm = np.cos(mu), np.sin(mu)
    cp, sp = np.cos(phi), np.sin(phi)
    R = np.empty(theta.shape + (3, 3))
    R[..., 0, 0] = ct * cm
    R[..., 0, 1] = ct * sm * sp - st * cp
    R[..., 0, 2] = ct * sm * cp + st * sp
    R[..., 1, 0] = st * cm
    R[..., 1, 1] = st * sm * sp + ct * cp
    R[..., 1, 2] = st * sm * cp - ct * sp
    R[..., 2, 0] = -sm
    R[..., 2, 1] = cm * sp
    R[..., 2, 2] = cm * cp
    return R


def euler_rates_to_omega(theta_d, mu_d, phi_d, mu, phi):
    """Body angular rates of the road frame from Euler-angle derivatives."""
    sm, cm = np.sin(mu), np.cos(mu)
    sp, cp = np.sin(phi), np.cos(phi)
    omega_x = phi_d - theta_d * sm
    omega_y = mu_d * cp + theta_d * cm * sp
    omega_z = theta_d * cm * cp - mu_d * sp
    return np.stack([omega_x, omega_y, omega_z], axis=-1)


def _central_diff(values: np.ndarray, s: np.ndarray, closed: bool) -> np.ndarray:
    """Central differences on a nonuniform grid; periodic across the seam if closed.

    For closed tracks the last node duplicates the first one (at ``s_f``),
    and ``values[-1] - values[0]`` may carry a full-turn offset for ``theta``.
    """
    d = np.empty_like(values)
    if closed:
        offset = values[-1] - values[0]
        s_f = s[-1]
        prev_v = np.concatenate(([values[-2] - offset], values[:-2]))
        prev_s = np.concatenate(([s[-2] - s_f], s[:-2]))
        next_v = values[1:]
        next_s = s[1:]
        core = _three_point(prev_s, s[:-1], next_s, prev_v, values[:-1], next_v)
        d[:-1] = core
        d[-1] = core[0]
    else:
        d[1:-1] = _three_point(s[:-2], s[1:-1], s[2:], values[:-2], values[1:-1], values[2:])
        d[0] = (values[1] - values[0]) / (s[1] - s[0])
        d[-1] = (values[-1] - values[-2]) / (s[-1] - s[-2])
    return d


def _three_point(s0, s1, s2, v0, v1, v2):
    # derivative at s1 of the parabola through the three points
    h0 = s1 - s0
    h1 = s2 - s1
    return (v2 - v1) * h0 / (h1 * (h0 + h1)) + (v1 - v0) * h1 / (h0 * (h0 + h1))


@dataclass(frozen=True, eq=False)
class TrackGeometry:
    """Discretized 3D reference line with Euler angles and lateral bounds.

    For a closed track the arrays hold one extra node at ``s = total_length``
    that duplicates the start position, so interpolation over the last
    segment needs no special casing.
    """

    s: np.ndarray
    position: np.ndarray
    theta: np.ndarray
    mu: np.ndarray
    phi: np.ndarray
    n_l: np.ndarray
    n_r: np.ndarray
    closed: bool = True
    omega_nodes: np.ndarray = field(init=False, repr=False)
    domega_nodes: np.ndarray = field(init=False, repr=False)
    dn_l_seg: np.ndarray = field(init=False, repr=False)
    dn_r_seg: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = self.s
        theta_d = _central_diff(self.theta, s, self.closed)
        mu_d = _central_diff(self.mu, s, self.closed)
        phi_d = _central_diff(self.phi, s, self.closed)
        omega = euler_rates_to_omega(theta_d, mu_d, phi_d, self.mu, self.phi)
        ds = np.diff(s)
        object.__setattr__(self, "omega_nodes", omega)
        # node rates from central differences keep the vertical load continuous across nodes
        object.__setattr__(self, "domega_nodes",
                           np.stack([_central_diff(omega[:, k], s, self.closed) for k in range(3)], axis=-1))
        object.__setattr__(self, "dn_l_seg", np.diff(self.n_l) / ds)
        object.__setattr__(self, "dn_r_seg", np.diff(self.n_r) / ds)
        for arr in (self.s, self.position, self.theta, self.mu, self.phi, self.n_l, self.n_r):
            arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, s, position, theta, mu, phi, n_l, n_r, closed=True):
        """Validate raw sample arrays and build a track.

        For ``closed=True`` the final row must sit at ``s_f`` and repeat the
        start position.
        """
        s = np.asarray(s, dtype=float)
        position = np.asarray(position, dtype=float).reshape(-1, 3)
        arrays = [np.asarray(a, dtype=float) for a in (theta, mu, phi, n_l, n_r)]
        if len(s) < 4:
            raise TrackValidationError(f"need at least 4 samples, got {len(s)}")
        if any(len(a) != len(s) for a in arrays) or len(position) != len(s):
            raise TrackValidationError("sample arrays differ in length")
        if not np.all(np.isfinite(s)) or not np.all(np.isfinite(position)):
            raise TrackValidationError("non-finite sample values")
        ds = np.diff(s)
        bad = np.flatnonzero(ds < MIN_SPACING)
        if bad.size:
            i = int(bad[0])
            raise TrackValidationError(
                f"arc length not strictly increasing at sample {i + 1} (s={s[i + 1]!r})"
            )
        theta, mu, phi, n_l, n_r = (np.unwrap(a) if k < 3 else a for k, a in enumerate(arrays))
        if np.any(np.abs(mu) >= math.pi / 2) or np.any(np.abs(phi) >= math.pi / 2):
            raise TrackValidationError("|mu| and |phi| must stay below pi/2")
        bad = np.flatnonzero(n_r >= n_l)
        if bad.size:
            raise TrackValidationError(f"n_r >= n_l at sample {int(bad[0])}")
        if closed:
            gap = float(np.linalg.norm(position[-1] - position[0]))
            if gap > CLOSURE_TOL:
                raise TrackValidationError(f"closure violated: |c(s_f) - c(0)| = {gap:.3g} m")
            position = position.copy()
            position[-1] = position[0]
        return cls(s - s[0], position, theta, mu, phi, n_l, n_r, closed=closed)

    @property
    def total_length(self) -> float:
        return float(self.s[-1])

    @property
    def samples(self) -> list[TrackSample]:
        stop = len(self.s) - 1 if self.closed else len(self.s)
        return [
            TrackSample(float(self.s[i]), self.position[i], float(self.theta[i]), float(self.mu[i]),
                        float(self.phi[i]), float(self.n_l[i]), float(self.n_r[i]))
            for i in range(stop)
        ]

    def wrap_s(self, s):
        """Map arc length into ``[0, s_f)`` (closed) or check the range (open)."""
        s_f = self.total_length
        if not self.closed:
            arr = np.asarray(s, dtype=float)
            if np.any(arr < 0.0) or np.any(arr > s_f):
                raise ValueError(f"s outside [0, {s_f}] on an open track")
            return arr if arr.ndim else float(arr)
        wrapped = np.mod(s, s_f)
        # np.mod can return s_f itself for tiny negative inputs
        wrapped = np.where(wrapped >= s_f, 0.0, wrapped)
        return wrapped if np.ndim(wrapped) else float(wrapped)

    def _locate(self, s):
        s = np.asarray(s, dtype=float)
        if self.closed:
            s = np.mod(s, self.total_length)
        idx = np.searchsorted(self.s, s, side="right") - 1
        idx = np.clip(idx, 0, len(self.s) - 2)
        w = (s - self.s[idx]) / (self.s[idx + 1] - self.s[idx])
        return idx, w

    def evaluate(self, s) -> TrackPoints:
        """All interpolated track quantities at arc length(s) ``s``."""
        i, w = self._locate(s)
        j = i + 1
        wc = w[..., None]

        def lerp(a):
            return a[i] + w * (a[j] - a[i])

        return TrackPoints(
            position=self.position[i] + wc * (self.position[j] - self.position[i]),
            theta=lerp(self.theta),
            mu=lerp(self.mu),
            phi=lerp(self.phi),
            omega=self.omega_nodes[i] + wc * (self.omega_nodes[j] - self.omega_nodes[i]),
            domega=self.domega_nodes[i] + wc * (self.domega_nodes[j] - self.domega_nodes[i]),
            n_l=lerp(self.n_l),
            n_r=lerp(self.n_r),
            dn_l=self.dn_l_seg[i],
            dn_r=self.dn_r_seg[i],
        )

    def frame_at(self, s: float) -> RoadFrame:
        p = self.evaluate(float(s))
        R = rotation_matrix(p.theta, p.mu, p.phi)
        t_vec, n_vec = R[:, 0], R[:, 1]
        return RoadFrame(
            t_vec=t_vec,
            n_vec=n_vec,
            m_vec=np.cross(t_vec, n_vec),
            omega=np.asarray(p.omega, dtype=float),
            euler=(float(p.theta), float(p.mu), float(p.phi)),
        )

    def surface_point(self, s, n):
        """Cartesian point ``c(s) + n * n_vec(s)``; vectorized over ``s`` and ``n``."""
        s, n = np.broadcast_arrays(np.asarray(s, float), np.asarray(n, float))
        p = self.evaluate(s)
        R = rotation_matrix(p.theta, p.mu, p.phi)
        return p.position + n[..., None] * R[..., :, 1]

    def bounds_at(self, s):
        i, w = self._locate(s)
        n_l = self.n_l[i] + w * (self.n_l[i + 1] - self.n_l[i])
        n_r = self.n_r[i] + w * (self.n_r[i + 1] - self.n_r[i])
        return n_l, n_r

    def signed_distance(self, s_from, s_to):
        """Shortest signed arc-length offset ``s_to - s_from`` (wrapped when closed)."""
        d = np.asarray(s_to, float) - np.asarray(s_from, float)
        if self.closed:
            s_f = self.total_length
            d = np.mod(d + 0.5 * s_f, s_f) - 0.5 * s_f
        return d


def load_track(source) -> TrackGeometry:
    """Read a track CSV (``s,x,y,z,theta,mu,phi,n_l,n_r``).

    A ``# closed=true|false`` comment declares closure (default true). Raises
    :class:`TrackFormatError` with a line number on malformed rows and
    :class:`TrackValidationError` on geometric problems.
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    closed = True
    header = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            meta = line[1:].strip().replace(" ", "")
            if meta.lower().startswith("closed="):
                value = meta.split("=", 1)[1].lower()
                if value not in ("true", "false"):
                    raise TrackFormatError(f"line {lineno}: bad closed flag {value!r}")
                closed = value == "true"
            continue
        if header is None:
            header = tuple(c.strip() for c in line.split(","))
            if header != CSV_COLUMNS:
                raise TrackFormatError(f"line {lineno}: expected header {','.join(CSV_COLUMNS)}")
            continue
        parts = line.split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise TrackFormatError(f"line {lineno}: expected {len(CSV_COLUMNS)} fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise TrackFormatError(f"line {lineno}: {exc}") from None
    if header is None:
        raise TrackFormatError("missing header")
    data = np.array(rows, dtype=float).reshape(-1, len(CSV_COLUMNS))
    return TrackGeometry.from_arrays(
        data[:, 0], data[:, 1:4], data[:, 4], data[:, 5], data[:, 6], data[:, 7], data[:, 8],
        closed=closed,
    )


def save_track(track: TrackGeometry, dest) -> None:
    buf = io.StringIO()
    buf.write(f"# closed={'true' if track.closed else 'false'}\n")
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for k in range(len(track.s)):
        x, y, z = track.position[k]
        vals = (track.s[k], x, y, z, track.theta[k], track.mu[k], track.phi[k], track.n_l[k], track.n_r[k])
        buf.write(",".join(repr(float(v)) for v in vals) + "\n")
    Path(dest).write_text(buf.getvalue(), encoding="utf-8")
