"""Exact arctan-layer velocity field, its partials, and the matching forcing.

u = (2/pi) arctan(-s (y - t)) sin(pi y),  v = (2/pi) arctan(-s (x - t)) sin(pi x),
pressure identically zero. u depends on (y, t) only and v on (x, t) only, so
both are built from one profile ``w(z, t)`` and its partials.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BenchmarkParams:
    nu: float = 1e-3
    steepness: float = 500.0
    T_final: float = 1.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.steepness > 0:
            raise ValueError(f"steepness must be positive, got {self.steepness}")


def _layer(z, t, s):
    """g(z - t) with g(q) = (2/pi) arctan(-s q), and its first two q-derivatives."""
    q = np.asarray(z, dtype=float) - t
    den = 1.0 + (s * q) ** 2
    g = (2.0 / np.pi) * np.arctan(-s * q)
    g1 = -(2.0 / np.pi) * s / den
    g2 = (2.0 / np.pi) * 2.0 * s**3 * q / den**2
    return g, g1, g2


def profile(z, t, steepness=500.0):
    """w(z, t) = g(z - t) sin(pi z)."""
    g, _, _ = _layer(z, t, steepness)
    return g * np.sin(np.pi * np.asarray(z, dtype=float))


def profile_partials(z, t, steepness=500.0):
    """Return (w, w_t, w_z, w_zz) of the profile."""
    z = np.asarray(z, dtype=float)
    g, g1, g2 = _layer(z, t, steepness)
    sn, cs = np.sin(np.pi * z), np.cos(np.pi * z)
    w = g * sn
    w_t = -g1 * sn
    w_z = g1 * sn + np.pi * g * cs
    w_zz = g2 * sn + 2.0 * np.pi * g1 * cs - np.pi**2 * g * sn
    return w, w_t, w_z, w_zz


def exact_velocity(x, y, t, steepness=500.0):
    return profile(y, t, steepness), profile(x, t, steepness)


def velocity_partials(x, y, t, steepness=500.0) -> dict:
    """Nonzero partials of (u, v); u_x = u_xx = v_y = v_yy = 0 identically."""
    u, u_t, u_y, u_yy = profile_partials(y, t, steepness)
    v, v_t, v_x, v_xx = profile_partials(x, t, steepness)
    return dict(u=u, u_t=u_t, u_y=u_y, u_yy=u_yy, v=v, v_t=v_t, v_x=v_x, v_xx=v_xx)


def forcing_from_partials(p: dict, nu: float):
    """f = u_t - nu lap u + (u . grad) u with u_x = v_y = 0."""
    f1 = p["u_t"] - nu * p["u_yy"] + p["v"] * p["u_y"]
    f2 = p["v_t"] - nu * p["v_xx"] + p["u"] * p["v_x"]
    return f1, f2


def exact_forcing(x, y, t, nu=1e-3, steepness=500.0):
    return forcing_from_partials(velocity_partials(x, y, t, steepness), nu)


def velocity_at(t: float, steepness: float = 500.0):
    """``(x, y) -> (u, v)`` closure at fixed time, for interpolation."""
    return lambda x, y: exact_velocity(x, y, t, steepness)


def forcing_at(t: float, nu: float = 1e-3, steepness: float = 500.0):
    return lambda x, y: exact_forcing(x, y, t, nu, steepness)
