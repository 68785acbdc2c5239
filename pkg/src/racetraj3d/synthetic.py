"""Synthetic track generators.

Tracks are built from an analytic centre curve: samples sit exactly on the
curve at (numerically) uniform 3D arc length, and the Euler angles follow the
analytic tangent. Banking is prescribed separately.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .track3d import TrackGeometry


def _resample(points_fn, tangent_fn, u0, u1, ds, closed, phi_fn, half_width, dense=None):
    """Sample ``points_fn(u)`` at uniform arc length.

    ``points_fn``/``tangent_fn`` map parameter arrays to ``(k, 3)`` arrays;
    ``phi_fn`` maps parameter values to banking angles.
    """
    n_dense = dense or 200_001
    u = np.linspace(u0, u1, n_dense)
    speed = np.linalg.norm(tangent_fn(u), axis=1)
    length_dense = cumulative_trapezoid(speed, u, initial=0.0)
    total = float(length_dense[-1])
    n_seg = max(int(round(total / ds)), 4)
    s = np.linspace(0.0, total, n_seg + 1)
    us = np.interp(s, length_dense, u)
    if closed:
        us[-1] = u1
    pos = points_fn(us)
    tan = tangent_fn(us)
    theta = np.unwrap(np.arctan2(tan[:, 1], tan[:, 0]))
    mu = -np.arctan2(tan[:, 2], np.hypot(tan[:, 0], tan[:, 1]))
    phi = phi_fn(us)
    width = np.broadcast_to(np.asarray(half_width, float), s.shape)
    return TrackGeometry.from_arrays(s, pos, theta, mu, phi, width, -width, closed=closed)


def straight(length=1000.0, width=10.0, ds=1.0) -> TrackGeometry:
    n = max(int(round(length / ds)), 3)
    s = np.linspace(0.0, length, n + 1)
    pos = np.column_stack([s, np.zeros_like(s), np.zeros_like(s)])
    zeros = np.zeros_like(s)
    half = np.full_like(s, 0.5 * width)
    return TrackGeometry.from_arrays(s, pos, zeros, zeros, zeros, half, -half, closed=False)


def flat_circle(radius=100.0, width=10.0, ds=1.0) -> TrackGeometry:
    """Counter-clockwise circle starting at ``(0, -R, 0)`` heading along +x."""
    length = 2.0 * math.pi * radius
    n = max(int(round(length / ds)), 8)
    s = np.linspace(0.0, length, n + 1)
    ang = s / radius
    pos = np.column_stack([radius * np.sin(ang), -radius * np.cos(ang), np.zeros_like(s)])
    pos[-1] = pos[0]
    zeros = np.zeros_like(s)
    half = np.full_like(s, 0.5 * width)
    return TrackGeometry.from_arrays(s, pos, ang, zeros, zeros, half, -half, closed=True)


def helix(radius=100.0, slope=0.1, length=600.0, width=10.0, ds=1.0, banking=0.0) -> TrackGeometry:
    """Open climbing helix; ``slope`` is the (constant) pitch angle in rad, uphill positive."""
    c = math.cos(slope)
    n = max(int(round(length / ds)), 4)
    s = np.linspace(0.0, length, n + 1)
    ang = s * c / radius
    pos = np.column_stack([radius * np.sin(ang), -radius * np.cos(ang), s * math.sin(slope)])
    theta = ang
    mu = np.full_like(s, -slope)
    phi = np.full_like(s, banking)
    half = np.full_like(s, 0.5 * width)
    return TrackGeometry.from_arrays(s, pos, theta, mu, phi, half, -half, closed=False)


def oval_banked(straight_length=400.0, radius=200.0, transition=150.0, banking_deg=20.0,
                width=15.0, ds=2.0) -> TrackGeometry:
    """Two identical banked left turns joined by straights.

    Curvature ramps linearly over ``transition`` metres at both ends of each
    turn and banking follows curvature, peaking at ``-banking_deg`` (raised
    outer edge). Start is mid-way along the first straight.
    """
    if transition < 0 or 2 * transition >= math.pi * radius + transition:
        raise ValueError("transition too long for the turn")
    if not 0.0 <= banking_deg < 89.0:
        raise ValueError("banking_deg out of range")
    k_max = 1.0 / radius
    arc = math.pi * radius - transition  # heading change of the turn equals pi
    half_straight = 0.5 * straight_length
    # breakpoints of the curvature profile over one lap
    knots_l = [0.0]
    knots_k = [0.0]

    def add(length, k_end):
        knots_l.append(knots_l[-1] + length)
        knots_k.append(k_end)

    add(half_straight, 0.0)
    for turn in range(2):
        add(transition, k_max)
        add(arc, k_max)
        add(transition, 0.0)
        add(straight_length if turn == 0 else half_straight, 0.0)
    knots_l = np.array(knots_l)
    knots_k = np.array(knots_k)
    total = float(knots_l[-1])

    fine = np.linspace(0.0, total, int(total / 0.01) + 1)
    kappa = np.interp(fine, knots_l, knots_k)
    heading = cumulative_trapezoid(kappa, fine, initial=0.0)
    x = cumulative_trapezoid(np.cos(heading), fine, initial=0.0)
    y = cumulative_trapezoid(np.sin(heading), fine, initial=0.0)
    # remove the (round-off sized) closure drift
    frac = fine / total
    x -= frac * x[-1]
    y -= frac * y[-1]

    n = max(int(round(total / ds)), 8)
    s = np.linspace(0.0, total, n + 1)
    pos = np.column_stack([np.interp(s, fine, x), np.interp(s, fine, y), np.zeros_like(s)])
    pos[-1] = pos[0]
    theta = np.interp(s, fine, heading)
    phi = -math.radians(banking_deg) * np.interp(s, knots_l, knots_k) / k_max
    zeros = np.zeros_like(s)
    half = np.full_like(s, 0.5 * width)
    return TrackGeometry.from_arrays(s, pos, theta, zeros, phi, half, -half, closed=True)


# (harmonic order, amplitude, phase) of the plan-view radius
_COMPLEX_HARMONICS = ((2, 0.28, 0.0), (3, 0.12, -0.5 * math.pi), (5, 0.05, 0.5))
# (polar angle, depth, angular width) of the Gaussian hairpin notches
_COMPLEX_NOTCHES = ((0.8, 0.25, 0.25), (3.5, 0.25, 0.22), (5.4, 0.1, 0.15))


def _polar_radius(u, scale, harmonics, notches):
    """Radius and its first two parameter derivatives."""
    r = np.ones_like(u)
    dr = np.zeros_like(u)
    d2r = np.zeros_like(u)
    for k, a, ph in harmonics:
        r += a * np.cos(k * u + ph)
        dr -= a * k * np.sin(k * u + ph)
        d2r -= a * k * k * np.cos(k * u + ph)
    for u0, depth, w in notches:
        x = np.angle(np.exp(1j * (u - u0)))
        g = depth * np.exp(-((x / w) ** 2))
        r -= g
        dr -= -2.0 * x / w**2 * g
        d2r -= (-2.0 / w**2 + 4.0 * x**2 / w**4) * g
    return scale * r, scale * dr, scale * d2r


def complex_synthetic(scale=250.0, max_slope_deg=13.0, max_banking_deg=8.0, width=12.0,
                      ds=2.0) -> TrackGeometry:
    """Mixed-curvature closed 3D course with hills, mild banking and hairpins.

    The plan view is a star-shaped polar curve with left and right turns of
    varying radius, three of them tightened into hairpins by Gaussian
    notches. Elevation is a two-harmonic profile scaled so the steepest
    slope equals ``max_slope_deg``; banking leans into each turn up to
    ``max_banking_deg``.
    """
    if not 0.0 <= max_slope_deg < 45.0 or not 0.0 <= max_banking_deg < 45.0:
        raise ValueError("slope/banking out of range")

    def radius(u):
        return _polar_radius(u, scale, _COMPLEX_HARMONICS, _COMPLEX_NOTCHES)

    def height_raw(u):
        return np.sin(u) + 0.6 * np.sin(3 * u + 1.0)

    def dheight_raw(u):
        return np.cos(u) + 1.8 * np.cos(3 * u + 1.0)

    u_probe = np.linspace(0.0, 2 * math.pi, 20001)
    r, dr, _ = radius(u_probe)
    grade = np.max(np.abs(dheight_raw(u_probe)) / np.hypot(r, dr))
    h_scale = math.tan(math.radians(max_slope_deg)) / grade if grade > 0 else 0.0

    def points(u):
        r = radius(u)[0]
        return np.column_stack([r * np.cos(u), r * np.sin(u), h_scale * height_raw(u)])

    def tangent(u):
        r, dr, _ = radius(u)
        return np.column_stack([dr * np.cos(u) - r * np.sin(u), dr * np.sin(u) + r * np.cos(u),
                                h_scale * dheight_raw(u)])

    def plan_curvature(u):
        r, dr, d2r = radius(u)
        return (r**2 + 2 * dr**2 - r * d2r) / (r**2 + dr**2) ** 1.5

    k_peak = np.max(np.abs(plan_curvature(u_probe)))
    bank = math.radians(max_banking_deg)

    def phi_fn(u):
        return -bank * plan_curvature(u) / k_peak

    return _resample(points, tangent, 0.0, 2 * math.pi, ds, True, phi_fn, 0.5 * width)


TRACK_KINDS = ("oval_banked", "complex_synthetic", "flat_circle", "straight")


def make_track(kind: str, **params) -> TrackGeometry:
    builders = {
        "oval_banked": oval_banked,
        "complex_synthetic": complex_synthetic,
        "flat_circle": flat_circle,
        "straight": straight,
    }
    if kind not in builders:
        raise ValueError(f"unknown track kind {kind!r}; choose from {', '.join(TRACK_KINDS)}")
    return builders[kind](**params)
