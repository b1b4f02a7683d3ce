"""Balance laws of the ensemble equation and per-trajectory action.

Every law has the form dA/dt + dB/dC = 0 on the label grid.  Residuals are
evaluated on the middle of three equally spaced slices with a central time
difference; C derivatives reuse the slice's own stencils.  Since B already
contains C derivatives, its derivative reaches two stencil half-widths from
each end, and only points beyond that reach enter the norms.  What leaves
through the truncated ends of the label range is reported as ``edge_flux``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import simpson

from .core import DomainError, Free, PhysicalParams, Potential, eval_potential
from .ensemble1d import Ensemble1D, _check_slices, c_derivatives, q_density_1d

LAWS = ("energy", "c_balance", "momentum")


@dataclass(frozen=True)
class BalanceReport:
    law: str
    t: float
    density: np.ndarray = field(repr=False)
    flux: np.ndarray = field(repr=False)
    residual_max: float = 0.0
    residual_rms: float = 0.0
    edge_flux: float = 0.0
    pointwise: np.ndarray | None = field(default=None, repr=False)
    identity_max: float | None = None

    def row(self) -> dict:
        return {"t": self.t, "law": self.law, "residual_max": self.residual_max,
                "residual_rms": self.residual_rms, "edge_flux": self.edge_flux}


@dataclass(frozen=True)
class ActionField:
    c_grid: np.ndarray
    S: np.ndarray
    t: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.S)):
            raise DomainError("action must be finite")


def _margin(ens: Ensemble1D, c_window=None) -> np.ndarray:
    """Mask of points whose residual is free of one-sided stencils.

    ``c_window`` further restricts to lo <= C <= hi, which keeps the measured
    region fixed in a refinement study.
    """
    h = ens.stencils().width // 2
    mask = np.zeros(ens.n_c, dtype=bool)
    mask[2 * h:ens.n_c - 2 * h] = True
    if c_window is not None:
        lo, hi = c_window
        tol = 1e-12
        mask &= (ens.c_grid >= lo - tol) & (ens.c_grid <= hi + tol)
    return mask


def energy_density(ens: Ensemble1D, pot: Potential, params: PhysicalParams) -> np.ndarray:
    """T + V + Q per trajectory (per unit C)."""
    der = c_derivatives(ens)
    return 0.5 * params.mass * ens.v**2 + eval_potential(pot, ens.x, params) + q_density_1d(der, params)


def lagrangian_density(ens: Ensemble1D, pot: Potential, params: PhysicalParams) -> np.ndarray:
    """T - V - Q per trajectory."""
    der = c_derivatives(ens)
    return 0.5 * params.mass * ens.v**2 - eval_potential(pot, ens.x, params) - q_density_1d(der, params)


def _energy_flux(ens: Ensemble1D, params: PhysicalParams) -> np.ndarray:
    der = c_derivatives(ens)
    d1, d2, d3 = der.d1, der.d2, der.d3
    st = ens.stencils()
    dv = st.apply(ens.v)
    k = params.hbar**2 / (4.0 * params.mass)
    return k * ((d3 / d1**4 - 2.0 * d2**2 / d1**5) * ens.v + 2.0 * d2 * dv[0] / d1**4 - dv[1] / d1**3)


def _momentum_flux(ens: Ensemble1D, params: PhysicalParams) -> np.ndarray:
    der = c_derivatives(ens)
    return params.hbar**2 / (4.0 * params.mass) * (der.d3 / der.d1**4 - 2.0 * der.d2**2 / der.d1**5)


def _report(law, slices, dens, flux_mid, dt, c_window=None, **extra) -> BalanceReport:
    mid = slices[1]
    dA = (dens[2] - dens[0]) / (2.0 * dt)
    dB = mid.stencils().apply(flux_mid, 1)
    res = dA + dB
    r = np.abs(res[_margin(mid, c_window)])
    return BalanceReport(law, mid.t, dens[1], flux_mid, float(r.max()), float(np.sqrt(np.mean(r * r))),
                         float(flux_mid[-1] - flux_mid[0]), res, **extra)


def energy_balance(history: Sequence[Ensemble1D], pot: Potential, params: PhysicalParams,
                   c_window=None) -> BalanceReport:
    dt = _check_slices(history)
    dens = [energy_density(s, pot, params) for s in history]
    return _report("energy", history, dens, _energy_flux(history[1], params), dt, c_window)


def c_balance(history: Sequence[Ensemble1D], pot: Potential, params: PhysicalParams,
              c_window=None) -> BalanceReport:
    """Label-translation law: density m xdot x', flux minus the Lagrangian density."""
    dt = _check_slices(history)
    dens = [params.mass * s.v * c_derivatives(s).d1 for s in history]
    mid = history[1]
    L = lagrangian_density(mid, pot, params)
    der = c_derivatives(mid)
    flux = -0.5 * params.mass * mid.v**2 + eval_potential(pot, mid.x, params) + q_density_1d(der, params)
    return _report("c_balance", history, dens, flux, dt, c_window, identity_max=float(np.max(np.abs(flux + L))))


def momentum_balance(history: Sequence[Ensemble1D], params: PhysicalParams,
                     pot: Potential | None = None, c_window=None) -> BalanceReport:
    """Only meaningful without external force."""
    if pot is not None and not isinstance(pot, Free):
        raise DomainError("momentum balance holds only for the free particle")
    dt = _check_slices(history)
    dens = [params.mass * s.v for s in history]
    return _report("momentum", history, dens, _momentum_flux(history[1], params), dt, c_window)


def total(ens: Ensemble1D, values) -> float:
    """Integral over the label range by Simpson's rule."""
    return float(simpson(values, x=ens.c_grid))


def energy_monitor(snapshots: Sequence[Ensemble1D], pot: Potential, params: PhysicalParams) -> np.ndarray:
    """Total ensemble energy plus the energy that has left through the ends.

    Returns one value per snapshot; constant in time up to discretization
    error.  The edge outflow is accumulated by the trapezoid rule, so the
    snapshots should be closely spaced.
    """
    E = np.array([total(s, energy_density(s, pot, params)) for s in snapshots])
    out = np.array([(lambda b: b[-1] - b[0])(_energy_flux(s, params)) for s in snapshots])
    t = np.array([s.t for s in snapshots])
    leaked = np.concatenate([[0.0], np.cumsum(0.5 * (out[1:] + out[:-1]) * np.diff(t))])
    return E + leaked


def momentum_monitor(snapshots: Sequence[Ensemble1D], params: PhysicalParams) -> np.ndarray:
    P = np.array([total(s, params.mass * s.v) for s in snapshots])
    out = np.array([(lambda b: b[-1] - b[0])(_momentum_flux(s, params)) for s in snapshots])
    t = np.array([s.t for s in snapshots])
    leaked = np.concatenate([[0.0], np.cumsum(0.5 * (out[1:] + out[:-1]) * np.diff(t))])
    return P + leaked


def accumulate_action(history: Sequence[Ensemble1D], pot: Potential, params: PhysicalParams) -> ActionField:
    """S(C, t) = integral of T - V - Q along each trajectory (trapezoid in t)."""
    if len(history) < 1:
        raise DomainError("empty history")
    t = np.array([s.t for s in history])
    if len(t) > 2:
        dt = np.diff(t)
        if np.max(np.abs(dt - dt[0])) > 1e-9 * abs(dt[0]):
            raise DomainError("action accumulation needs a uniform time step")
    L = np.array([lagrangian_density(s, pot, params) for s in history])
    S = np.zeros(history[0].n_c)
    for i in range(1, len(history)):
        S = S + 0.5 * (L[i] + L[i - 1]) * (t[i] - t[i - 1])
    return ActionField(history[0].c_grid, S, float(t[-1]))
