"""Manufactured no-slip vortex on the unit square for convergence studies.

Stream function psi = A g(t) P(x) Q(y) with P(s) = Q(s) = s^2 (1-s)^2 and
g(t) = cos(omega t); the velocity u = (psi_y, -psi_x) is divergence-free
and vanishes on the whole boundary together with the forcing-compatible
pressure p = g(t) (x^3 + y^3 - 1/2), which has zero mean.  The body force
f = u_t + (u . grad) u - nu lap(u) + grad p makes (u, p) an exact
Navier-Stokes solution.
"""

import numpy as np


def _p(s):
    return s * s * (1.0 - s) ** 2


def _dp(s):
    return 2.0 * s - 6.0 * s**2 + 4.0 * s**3


def _d2p(s):
    return 2.0 - 12.0 * s + 12.0 * s**2


def _d3p(s):
    return -12.0 + 24.0 * s


def exact_velocity(t, amplitude=80.0, omega=2.0):
    """Callable (x, y) -> (u1, u2) for the exact velocity at time t."""
    g = np.cos(omega * t)

    def fn(x, y):
        u1 = amplitude * g * _p(x) * _dp(y)
        u2 = -amplitude * g * _dp(x) * _p(y)
        return u1, u2

    return fn


def exact_pressure(t, omega=2.0):
    g = np.cos(omega * t)

    def fn(x, y):
        return g * (x**3 + y**3 - 0.5)

    return fn


def forcing(t, nu, amplitude=80.0, omega=2.0):
    """Callable (x, y) -> (f1, f2) for the manufactured body force at time t."""
    g = np.cos(omega * t)
    gdot = -omega * np.sin(omega * t)

    def fn(x, y):
        px, dpx, d2px, d3px = _p(x), _dp(x), _d2p(x), _d3p(x)
        py, dpy, d2py, d3py = _p(y), _dp(y), _d2p(y), _d3p(y)

        u1 = amplitude * g * px * dpy
        u2 = -amplitude * g * dpx * py
        u1_t = amplitude * gdot * px * dpy
        u2_t = -amplitude * gdot * dpx * py

        u1_x = amplitude * g * dpx * dpy
        u1_y = amplitude * g * px * d2py
        u2_x = -amplitude * g * d2px * py
        u2_y = -amplitude * g * dpx * dpy

        lap_u1 = amplitude * g * (d2px * dpy + px * d3py)
        lap_u2 = -amplitude * g * (d3px * py + dpx * d2py)

        f1 = u1_t + u1 * u1_x + u2 * u1_y - nu * lap_u1 + 3.0 * g * x**2
        f2 = u2_t + u1 * u2_x + u2 * u2_y - nu * lap_u2 + 3.0 * g * y**2
        return f1, f2

    return fn
