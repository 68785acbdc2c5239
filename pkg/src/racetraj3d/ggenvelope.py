"""Velocity- and vertical-acceleration-dependent diamond gg-diagrams."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .validation import GgValidationError, check_fraction, check_increasing, check_positive

G_EARTH = 9.81
ENVELOPE_FLOOR = 0.1
CSV_COLUMNS = ("v", "g_tilde", "ax_min", "ax_max", "ay_max", "p")


class GgShape(NamedTuple):
    """Diamond parameters at one or many ``(v, g_tilde)`` points."""

    ax_min: np.ndarray
    ax_max: np.ndarray
    ay_max: np.ndarray
    p: np.ndarray


class ApparentAccel(NamedTuple):
    a_x_tilde: np.ndarray
    a_y_tilde: np.ndarray
    g_tilde: np.ndarray


class AccelCheck(NamedTuple):
    ok: np.ndarray
    slack_ax_max: np.ndarray
    slack_ay_max: np.ndarray
    slack_diamond: np.ndarray

    @property
    def worst(self):
        return np.minimum(np.minimum(self.slack_ax_max, self.slack_ay_max), self.slack_diamond)


@dataclass(frozen=True, eq=False)
class GgLookup:
    """Diamond parameter tables on a rectangular ``(v, g_tilde)`` grid.

    Tables have shape ``(len(v_grid), len(g_grid))``.
    """

    v_grid: np.ndarray
    g_grid: np.ndarray
    ax_min: np.ndarray
    ax_max: np.ndarray
    ay_max: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        v = check_increasing(self.v_grid, "v_grid")
        g = check_increasing(self.g_grid, "g_grid")
        shape = (v.size, g.size)
        for name in ("ax_min", "ax_max", "ay_max", "p"):
            tab = np.asarray(getattr(self, name), dtype=float)
            if tab.shape != shape:
                raise GgValidationError(f"{name} table has shape {tab.shape}, expected {shape}")
            if not np.all(np.isfinite(tab)):
                raise GgValidationError(f"{name} table has non-finite entries")
            object.__setattr__(self, name, tab)
        object.__setattr__(self, "v_grid", v)
        object.__setattr__(self, "g_grid", g)
        if np.any(self.p < 1.0) or np.any(self.p > 2.0):
            raise GgValidationError("shape factor p must lie in [1, 2]")
        if np.any(self.ax_min >= 0.0) or np.any(self.ax_max <= 0.0) or np.any(self.ay_max <= 0.0):
            raise GgValidationError("need ax_min < 0 < ax_max and ay_max > 0 at every grid point")

    @property
    def n_cells(self) -> int:
        return self.v_grid.size * self.g_grid.size

    def query(self, v, g_tilde) -> GgShape:
        return query(self, v, g_tilde)


def _axis_weights(grid, x):
    x = np.clip(x, grid[0], grid[-1])
    if grid.size == 1:
        zero = np.zeros(np.shape(x), dtype=int)
        return zero, zero, np.zeros(np.shape(x))
    i = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, grid.size - 2)
    w = (x - grid[i]) / (grid[i + 1] - grid[i])
    return i, i + 1, w


def query(gg: GgLookup, v, g_tilde) -> GgShape:
    """Bilinear interpolation of all four parameters; inputs are clamped to the grid."""
    v, g_tilde = np.broadcast_arrays(np.asarray(v, float), np.asarray(g_tilde, float))
    i0, i1, wv = _axis_weights(gg.v_grid, v)
    j0, j1, wg = _axis_weights(gg.g_grid, g_tilde)

    def bilinear(tab):
        lo = tab[i0, j0] + wg * (tab[i0, j1] - tab[i0, j0])
        hi = tab[i1, j0] + wg * (tab[i1, j1] - tab[i1, j0])
        return lo + wv * (hi - lo)

    return GgShape(bilinear(gg.ax_min), bilinear(gg.ax_max), bilinear(gg.ay_max), bilinear(gg.p))


def synth_gg(mu_x, mu_y, ax_drive_max, p, v_grid, g_grid) -> GgLookup:
    """Friction-proportional diamond tables.

    Limits scale with ``g_tilde`` so that banking and compressions enlarge
    the envelope; ``ax_drive_max`` caps the positive longitudinal limit.
    """
    mu_x = check_positive(mu_x, "mu_x")
    mu_y = check_positive(mu_y, "mu_y")
    ax_drive_max = check_positive(ax_drive_max, "ax_drive_max")
    p = check_positive(p, "p")
    v_grid = np.asarray(v_grid, dtype=float)
    g_grid = np.asarray(g_grid, dtype=float)
    if v_grid.size == 0 or g_grid.size == 0:
        raise GgValidationError("empty grid")
    if np.any(g_grid <= 0):
        raise GgValidationError("g_grid must be positive")
    gg_col = np.broadcast_to(g_grid[None, :], (v_grid.size, g_grid.size))
    return GgLookup(
        v_grid=v_grid,
        g_grid=g_grid,
        ax_min=-mu_x * gg_col,
        ax_max=np.minimum(ax_drive_max, mu_x * gg_col),
        ay_max=mu_y * gg_col,
        p=np.full(gg_col.shape, p),
    )


def load_gg(source) -> GgLookup:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or tuple(c.strip() for c in lines[0].split(",")) != CSV_COLUMNS:
        raise GgValidationError(f"expected header {','.join(CSV_COLUMNS)}")
    try:
        data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]], dtype=float)
    except ValueError as exc:
        raise GgValidationError(str(exc)) from None
    if data.ndim != 2 or data.shape[1] != len(CSV_COLUMNS):
        raise GgValidationError("every row needs six fields")
    v_grid = np.unique(data[:, 0])
    g_grid = np.unique(data[:, 1])
    shape = (v_grid.size, g_grid.size)
    tables = {name: np.full(shape, np.nan) for name in CSV_COLUMNS[2:]}
    iv = np.searchsorted(v_grid, data[:, 0])
    ig = np.searchsorted(g_grid, data[:, 1])
    seen = np.zeros(shape, dtype=int)
    np.add.at(seen, (iv, ig), 1)
    if np.any(seen > 1):
        raise GgValidationError("duplicate grid cell")
    if np.any(seen == 0):
        k = np.argwhere(seen == 0)[0]
        raise GgValidationError(f"missing grid cell v={v_grid[k[0]]!r}, g_tilde={g_grid[k[1]]!r}")
    for col, name in enumerate(CSV_COLUMNS[2:], start=2):
        tables[name][iv, ig] = data[:, col]
    return GgLookup(v_grid=v_grid, g_grid=g_grid, **tables)


def save_gg(gg: GgLookup, dest) -> None:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for i, v in enumerate(gg.v_grid):
        for j, g in enumerate(gg.g_grid):
            vals = (v, g, gg.ax_min[i, j], gg.ax_max[i, j], gg.ay_max[i, j], gg.p[i, j])
            buf.write(",".join(repr(float(x)) for x in vals) + "\n")
    Path(dest).write_text(buf.getvalue(), encoding="utf-8")


def apparent_accels(ax_hat, ay_hat, v, chi_hat, frame, s_dot, w_dot) -> ApparentAccel:
    """Accelerations felt on the inclined road plane, gravity included.

    ``frame`` is a :class:`~racetraj3d.track3d.RoadFrame` or anything with
    ``mu``, ``phi`` and ``omega`` attributes (e.g. vectorized ``TrackPoints``).
    ``w_dot`` is the time derivative of the vertical velocity, supplied by
    the caller.
    """
    if hasattr(frame, "euler"):
        _, mu, phi = frame.euler
    else:
        mu, phi = frame.mu, frame.phi
    omega = np.asarray(frame.omega, dtype=float)
    sm, cm = np.sin(mu), np.cos(mu)
    sp, cp = np.sin(phi), np.cos(phi)
    sc, cc = np.sin(chi_hat), np.cos(chi_hat)
    omega_y_hat = (omega[..., 1] * cc - omega[..., 0] * sc) * s_dot
    ax_t = ax_hat + G_EARTH * (cm * sp * sc - sm * cc)
    ay_t = ay_hat + G_EARTH * (sm * sc + cm * sp * cc)
    g_t = w_dot - omega_y_hat * v + G_EARTH * cm * cp
    return ApparentAccel(ax_t, ay_t, g_t)


def check_accel(shape: GgShape, a: ApparentAccel) -> AccelCheck:
    """Evaluate the three diamond inequalities; slacks are >= 0 when satisfied."""
    ax = np.asarray(a.a_x_tilde, float)
    ay_abs = np.abs(np.asarray(a.a_y_tilde, float))
    slack1 = shape.ax_max - ax
    slack2 = shape.ay_max - ay_abs
    ratio = np.minimum(ay_abs / shape.ay_max, 1.0)
    bracket = np.maximum(1.0 - ratio ** shape.p, 0.0)
    ax_allowed = np.abs(shape.ax_min) * bracket ** (1.0 / shape.p)
    slack3 = ax_allowed - np.abs(ax)
    ok = (slack1 >= 0.0) & (slack2 >= 0.0) & (slack3 >= 0.0)
    return AccelCheck(ok, slack1, slack2, slack3)


def scale_for_racing_line(shape: GgShape, a_mgn: float, a_abs_mgn: float) -> GgShape:
    """Shrink the extremal values by a relative and then an absolute margin."""
    a_mgn = check_fraction(a_mgn, "a_mgn")
    a_abs_mgn = check_positive(a_abs_mgn, "a_abs_mgn", strict=False)

    def shrink(e):
        e = np.abs(e)
        # the floor must not enlarge values that already sit below it
        return np.minimum(e, np.maximum(ENVELOPE_FLOOR, (1.0 - a_mgn) * e - a_abs_mgn))

    if a_mgn == 0.0 and a_abs_mgn == 0.0:
        return shape
    return GgShape(-shrink(shape.ax_min), shrink(shape.ax_max), shrink(shape.ay_max), shape.p)
