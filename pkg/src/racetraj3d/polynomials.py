"""Minimum-jerk quartic and quintic boundary-value polynomials.

Coefficients are stored in ascending order and padded to six entries, so
quartics and quintics share one vectorized evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _check_horizon(T):
    T = np.asarray(T, dtype=float)
    if np.any(~np.isfinite(T)) or np.any(T <= 0.0):
        raise ValueError("horizon T must be positive")
    return T


def quintic_coeffs(p0, v0, a0, p1, v1, a1, T):
    """Coefficients ``(..., 6)`` of the quintic matching position, rate and
    acceleration at both ends. Inputs broadcast."""
    T = _check_horizon(T)
    p0, v0, a0, p1, v1, a1, T = np.broadcast_arrays(*(np.asarray(x, float) for x in (p0, v0, a0, p1, v1, a1, T)))
    dp = p1 - p0 - v0 * T - 0.5 * a0 * T**2
    dv = v1 - v0 - a0 * T
    da = a1 - a0
    T2 = T * T
    T3 = T2 * T
    c3 = (10.0 * dp - 4.0 * dv * T + 0.5 * da * T2) / T3
    c4 = (-15.0 * dp + 7.0 * dv * T - da * T2) / (T3 * T)
    c5 = (6.0 * dp - 3.0 * dv * T + 0.5 * da * T2) / (T3 * T2)
    return np.stack([p0, v0, 0.5 * a0, c3, c4, c5], axis=-1)


def quartic_coeffs(p0, v0, a0, v1, a1, T):
    """Coefficients ``(..., 6)`` (last one zero) of the quartic with free end
    position, matching rate and acceleration at ``T``."""
    T = _check_horizon(T)
    p0, v0, a0, v1, a1, T = np.broadcast_arrays(*(np.asarray(x, float) for x in (p0, v0, a0, v1, a1, T)))
    dv = v1 - v0 - a0 * T
    da = a1 - a0
    c3 = (3.0 * dv - da * T) / (3.0 * T**2)
    c4 = (da * T - 2.0 * dv) / (4.0 * T**3)
    return np.stack([p0, v0, 0.5 * a0, c3, c4, np.zeros_like(c3)], axis=-1)


def poly_eval(coeffs, t):
    """Value, first and second derivative of ``(..., 6)`` coefficient sets.

    For batched ``coeffs`` ``(C, 6)`` a time axis is appended, so ``t`` of
    shape ``(N,)`` or ``(C, N)`` gives ``(C, N)`` results.
    """
    c = np.moveaxis(np.asarray(coeffs, dtype=float), -1, 0)
    if c.ndim > 1:
        c = c[..., None]
    t = np.asarray(t, dtype=float)
    p = ((((c[5] * t + c[4]) * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0]
    d1 = (((5.0 * c[5] * t + 4.0 * c[4]) * t + 3.0 * c[3]) * t + 2.0 * c[2]) * t + c[1]
    d2 = ((20.0 * c[5] * t + 12.0 * c[4]) * t + 6.0 * c[3]) * t + 2.0 * c[2]
    return p, d1, d2


def jerk_cost_coeffs(coeffs, T):
    """Closed form of ``0.5 * integral_0^T (d3p/dt3)^2 dt``."""
    c = np.asarray(coeffs, dtype=float)
    T = _check_horizon(T)
    j0 = 6.0 * c[..., 3]
    j1 = 24.0 * c[..., 4]
    j2 = 60.0 * c[..., 5]
    integral = (j0 * j0 * T + j0 * j1 * T**2 + (j1 * j1 + 2.0 * j0 * j2) * T**3 / 3.0
                + 0.5 * j1 * j2 * T**4 + j2 * j2 * T**5 / 5.0)
    return 0.5 * integral


@dataclass(frozen=True)
class Poly5:
    """Quintic ``sum c_k t^k`` on ``[0, T]``."""

    coeffs: tuple
    T: float

    def __call__(self, t, deriv=0):
        return poly_eval(np.asarray(self.coeffs), t)[deriv]

    def state(self, t):
        """``(p, p_dot, p_ddot)`` at ``t``."""
        return tuple(poly_eval(np.asarray(self.coeffs), t))


@dataclass(frozen=True)
class Poly4(Poly5):
    """Quartic with free end position; ``coeffs`` has five entries."""

    def __call__(self, t, deriv=0):
        return poly_eval(np.append(self.coeffs, 0.0), t)[deriv]

    def state(self, t):
        return tuple(poly_eval(np.append(self.coeffs, 0.0), t))


def quintic(start, end, T) -> Poly5:
    """Minimum-jerk quintic from ``start=(p, v, a)`` to ``end=(p, v, a)``."""
    c = quintic_coeffs(*start, *end, T)
    return Poly5(tuple(float(x) for x in c), float(T))


def quartic(start, end, T) -> Poly4:
    """Minimum-jerk quartic from ``start=(p, v, a)`` to ``end=(v, a)``."""
    c = quartic_coeffs(*start, *end, T)
    return Poly4(tuple(float(x) for x in c[:5]), float(T))


def jerk_cost(poly, T=None) -> float:
    T = poly.T if T is None else T
    c = np.zeros(6)
    c[: len(poly.coeffs)] = poly.coeffs
    return float(jerk_cost_coeffs(c, T))
