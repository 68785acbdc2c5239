"""Closed transformation from curvilinear states to velocity-frame quantities.

The road-frame velocity of a point at ``(s, n)`` is
``V = [s_dot (1 - n Omega_z), n_dot, n Omega_x s_dot]`` and its acceleration
is ``A = dV/dt + omega x V`` with ``omega = Omega s_dot``. Rotating ``A``
about the surface normal by the heading ``chi_hat`` yields the
velocity-frame accelerations.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .ggenvelope import ApparentAccel, apparent_accels
from .track3d import TrackPoints

V_EPS = 1e-9


class Kinematics(NamedTuple):
    v: np.ndarray
    chi_hat: np.ndarray
    ax_hat: np.ndarray
    ay_hat: np.ndarray
    kappa_hat: np.ndarray
    w: np.ndarray
    w_dot: np.ndarray
    apparent: ApparentAccel
    domain_ok: np.ndarray


def flatten(points: TrackPoints) -> TrackPoints:
    """Same track points with slope, banking and the matching rates removed."""
    zero = np.zeros_like(points.mu)
    omega = points.omega.copy()
    omega[..., :2] = 0.0
    domega = points.domega.copy()
    domega[..., :2] = 0.0
    return points._replace(mu=zero, phi=zero.copy(), omega=omega, domega=domega)


def road_kinematics(points: TrackPoints, s_dot, s_ddot, n, n_dot, n_ddot, flat=False) -> Kinematics:
    """Velocity, heading, accelerations and curvature on the road plane.

    All state arrays must broadcast against the track point arrays. With
    ``flat=True`` the checks see a level road (no slope, banking, pitch or
    roll rate); the yaw rate of the reference line is kept.
    """
    if flat:
        points = flatten(points)
    om = points.omega
    dom = points.domega
    ox, oy, oz = om[..., 0], om[..., 1], om[..., 2]
    dox, doz = dom[..., 0], dom[..., 2]

    q = 1.0 - n * oz
    u = s_dot * q
    w = n * ox * s_dot
    v = np.hypot(u, n_dot)
    moving = v > V_EPS
    v_safe = np.where(moving, v, 1.0)
    c_chi = np.where(moving, u / v_safe, 1.0)
    s_chi = np.where(moving, n_dot / v_safe, 0.0)
    chi = np.arctan2(s_chi, c_chi)

    wx, wy, wz = ox * s_dot, oy * s_dot, oz * s_dot
    u_dot = s_ddot * q - n_dot * oz * s_dot - n * doz * s_dot**2
    w_dot = n_dot * ox * s_dot + n * dox * s_dot**2 + n * ox * s_ddot

    a_x = u_dot + wy * w - wz * n_dot
    a_y = n_ddot + wz * u - wx * w

    ax_hat = a_x * c_chi + a_y * s_chi
    ay_hat = -a_x * s_chi + a_y * c_chi
    chi_dot = np.where(moving, (u * n_ddot - n_dot * u_dot) / v_safe**2, 0.0)
    kappa = np.where(moving, (chi_dot + wz) / v_safe, 0.0)

    apparent = apparent_accels(ax_hat, ay_hat, v, chi, points, s_dot, w_dot)
    return Kinematics(v, chi, ax_hat, ay_hat, kappa, w, w_dot, apparent, q > 0.0)
