"""Closed-form trajectory ensembles for free and harmonic Gaussian wavepackets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError, PhysicalParams, erfinv


@dataclass(frozen=True)
class GaussianParams:
    """Centre ``x0``, momentum ``p0``, reference time ``t0`` and width ``a``.

    ``a`` is the length scale of the density exp(-(x - x0)^2 / a^2) at t0, so
    the trajectory labelled C sits at x0 + a erfinv(2C - 1) initially.
    """

    x0: float = 0.0
    p0: float = 0.0
    t0: float = 0.0
    a: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a > 0):
            raise DomainError(f"width a must be positive, got {self.a!r}")
        for name in ("x0", "p0", "t0"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")


def _quantile(C):
    C = np.asarray(C, dtype=float)
    if np.any(~np.isfinite(C)) or np.any(C <= 0.0) or np.any(C >= 1.0):
        raise DomainError("trajectory label C must lie in (0, 1); the ensemble diverges at the ends")
    return erfinv(2.0 * C - 1.0)


def _out(val):
    val = np.asarray(val)
    return val[()] if val.ndim == 0 else val


def free_gaussian_x(gp: GaussianParams, params: PhysicalParams, C, t):
    y = _quantile(C)
    tau = np.asarray(t, dtype=float) - gp.t0
    m, hb = params.mass, params.hbar
    env = np.sqrt(1.0 + (hb * tau / (m * gp.a**2)) ** 2)
    return _out(gp.x0 + gp.p0 * tau / m + gp.a * y * env)


def free_gaussian_v(gp: GaussianParams, params: PhysicalParams, C, t):
    y = _quantile(C)
    tau = np.asarray(t, dtype=float) - gp.t0
    m, hb = params.mass, params.hbar
    s = (hb / (m * gp.a**2)) ** 2
    return _out(gp.p0 / m + gp.a * y * s * tau / np.sqrt(1.0 + s * tau * tau))


def _ho_envelope(gp, params, omega, tau):
    m, hb = params.mass, params.hbar
    b = hb / (m * gp.a**2 * omega)
    c, s = np.cos(omega * tau), np.sin(omega * tau)
    return c, s, b, np.sqrt(c * c + (b * s) ** 2)


def ho_gaussian_x(gp: GaussianParams, params: PhysicalParams, omega: float, C, t):
    if not omega > 0:
        raise DomainError("omega must be positive")
    y = _quantile(C)
    tau = np.asarray(t, dtype=float) - gp.t0
    c, s, _, env = _ho_envelope(gp, params, omega, tau)
    return _out(gp.x0 * c + gp.p0 * s / (params.mass * omega) + gp.a * y * env)


def ho_gaussian_v(gp: GaussianParams, params: PhysicalParams, omega: float, C, t):
    if not omega > 0:
        raise DomainError("omega must be positive")
    y = _quantile(C)
    tau = np.asarray(t, dtype=float) - gp.t0
    c, s, b, env = _ho_envelope(gp, params, omega, tau)
    # d/dt sqrt(c^2 + b^2 s^2) = omega (b^2 - 1) s c / env
    denv = omega * (b * b - 1.0) * s * c / env
    return _out(-gp.x0 * omega * s + gp.p0 * c / params.mass + gp.a * y * denv)


def free_gaussian_density(gp: GaussianParams, params: PhysicalParams, x, t):
    """Normalised density of the spreading Gaussian, rho = exp(-(x-xc)^2/w^2)/(sqrt(pi) w)."""
    tau = np.asarray(t, dtype=float) - gp.t0
    m, hb = params.mass, params.hbar
    w = gp.a * np.sqrt(1.0 + (hb * tau / (m * gp.a**2)) ** 2)
    xc = gp.x0 + gp.p0 * tau / m
    x = np.asarray(x, dtype=float)
    return _out(np.exp(-((x - xc) / w) ** 2) / (math.sqrt(math.pi) * w))


def free_gaussian_wavefunction(gp: GaussianParams, params: PhysicalParams, x, t):
    """Complex amplitude whose density and Bohmian flow reproduce free_gaussian_x.

    Used only by tests and the grid oracle; the core never touches amplitudes.
    """
    m, hb = params.mass, params.hbar
    tau = np.asarray(t, dtype=float) - gp.t0
    x = np.asarray(x, dtype=float)
    # sigma0 = a / sqrt(2) is the amplitude width for |psi|^2 ~ exp(-x^2/a^2)
    z = 1.0 + 1j * hb * tau / (m * gp.a**2)
    xc = gp.x0 + gp.p0 * tau / m
    phase = gp.p0 * (x - gp.x0) / hb - gp.p0**2 * tau / (2.0 * m * hb)
    amp = (math.pi * gp.a**2) ** -0.25 / np.sqrt(z) * np.exp(-((x - xc) ** 2) / (2.0 * gp.a**2 * z))
    return amp * np.exp(1j * phase)
