"""Built-in manufactured solutions and pulse initial data."""

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class ManufacturedSolution:
    """Exact space-time solution with everything the harness needs."""

    u: callable
    u_t: callable
    grad_u: callable
    f: callable


def standing_wave(omega=2.0 * math.pi):
    """Radially symmetric standing mode on the disc of radius 1/2.

    u = (1 - 4 r^2) cos(omega t) vanishes on the boundary; the matching
    source is f = (4 omega^2 r^2 - omega^2 + 16) cos(omega t).
    """

    def u(x, t):
        x = np.asarray(x, dtype=float)
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        return (1.0 - 4.0 * r2) * math.cos(omega * t)

    def u_t(x, t):
        x = np.asarray(x, dtype=float)
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        return -omega * (1.0 - 4.0 * r2) * math.sin(omega * t)

    def grad_u(x, t):
        x = np.asarray(x, dtype=float)
        return -8.0 * x * math.cos(omega * t)

    def f(x, t):
        x = np.asarray(x, dtype=float)
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        return (4.0 * omega**2 * r2 - omega**2 + 16.0) * math.cos(omega * t)

    return ManufacturedSolution(u=u, u_t=u_t, grad_u=grad_u, f=f)


def poisson_disc():
    """Elliptic benchmark on the disc: u = 1 - 4 r^2 solves -Δu = 16."""

    def u(x):
        x = np.asarray(x, dtype=float)
        return 1.0 - 4.0 * (x[..., 0] ** 2 + x[..., 1] ** 2)

    def grad_u(x):
        return -8.0 * np.asarray(x, dtype=float)

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], 16.0)

    return u, grad_u, f


def radial_pulse(r0=0.2):
    """Compactly supported cosine bump around the origin, zero velocity."""

    def u0(x):
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        return np.where(r < r0, 1.0 + np.cos(np.pi * np.minimum(r, r0) / r0), 0.0)

    return u0


def planar_pulse(d0, center=-0.01):
    """Cosine bump in x around the given center line, zero velocity."""

    def u0(x):
        x = np.asarray(x, dtype=float)
        s = np.abs(x[..., 0] - center)
        return np.where(s < d0, 1.0 + np.cos(np.pi * np.minimum(s, d0) / d0), 0.0)

    return u0
