"""Densities recovered from trajectory ensembles and comparison metrics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson, trapezoid
from scipy.interpolate import PchipInterpolator

from .core import DomainError, InputError
from .ensemble1d import Ensemble1D, c_derivatives


@dataclass(frozen=True)
class DensityField:
    x_grid: np.ndarray
    rho: np.ndarray
    t: float = 0.0
    n_clipped: int = 0

    def __post_init__(self):
        x = np.asarray(self.x_grid, dtype=float)
        rho = np.asarray(self.rho, dtype=float)
        if x.ndim != 1 or rho.shape != x.shape or len(x) < 2:
            raise InputError("x_grid and rho must be 1D arrays of equal length >= 2")
        if np.any(np.diff(x) <= 0):
            raise InputError("x_grid must be strictly increasing")
        if np.any(rho < 0) or not np.all(np.isfinite(rho)):
            raise DomainError("density must be finite and non-negative")
        if trapezoid(rho, x) > 1.0 + 1e-9:
            raise DomainError(f"density integrates to {trapezoid(rho, x)!r} > 1")
        object.__setattr__(self, "x_grid", x)
        object.__setattr__(self, "rho", rho)

    def integral(self) -> float:
        return float(simpson(self.rho, x=self.x_grid))


def density_from_ensemble(ens: Ensemble1D) -> DensityField:
    """rho = 1/x' sampled at the trajectories themselves."""
    d1 = c_derivatives(ens).d1
    return DensityField(ens.x, 1.0 / d1, ens.t)


def resample_density(df: DensityField, target_grid) -> DensityField:
    """Monotone cubic (PCHIP) interpolation onto ``target_grid``.

    Targets outside the sampled support get zero density and are counted in
    ``n_clipped``; a warning reports how many.  A result whose trapezoid mass
    exceeds one is scaled back to unit mass.
    """
    tg = np.asarray(target_grid, dtype=float)
    lo, hi = df.x_grid[0], df.x_grid[-1]
    inside = (tg >= lo) & (tg <= hi)
    n_out = int(np.count_nonzero(~inside))
    rho = np.zeros_like(tg)
    rho[inside] = PchipInterpolator(df.x_grid, df.rho)(tg[inside])
    np.maximum(rho, 0.0, out=rho)
    # interpolation error can push a unit-mass density a hair above 1
    mass = trapezoid(rho, tg) if len(tg) > 1 else 0.0
    if mass > 1.0:
        rho /= mass
    if n_out:
        warnings.warn(f"{n_out} target points outside [{lo!r}, {hi!r}] clipped to zero density", stacklevel=2)
    return DensityField(tg, rho, df.t, n_out)


def common_grid(a: DensityField, b: DensityField, n: int | None = None) -> np.ndarray:
    lo = max(a.x_grid[0], b.x_grid[0])
    hi = min(a.x_grid[-1], b.x_grid[-1])
    if not hi > lo:
        raise DomainError("density supports do not overlap")
    n = n or 4 * max(len(a.x_grid), len(b.x_grid))
    return np.linspace(lo, hi, n)


def compare_densities(a: DensityField, b: DensityField, n: int | None = None) -> dict:
    """L1 and Linf distance plus overlap on the shared support.

    ``l1`` and ``linf`` use the densities as given.  ``overlap`` is the
    Bhattacharyya coefficient of the two densities renormalised on the shared
    support, so identical inputs give exactly 1 even when they carry less
    than unit mass (truncated ensembles).
    """
    x = common_grid(a, b, n)
    ra = resample_density(a, x).rho
    rb = resample_density(b, x).rho
    diff = np.abs(ra - rb)
    ma, mb = trapezoid(ra, x), trapezoid(rb, x)
    if ma <= 0 or mb <= 0:
        raise DomainError("a density vanishes on the shared support")
    ov = trapezoid(np.sqrt(ra * rb), x) / np.sqrt(ma * mb)
    return {"l1": float(trapezoid(diff, x)), "linf": float(diff.max()), "overlap": float(min(ov, 1.0)),
            "overlap_raw": float(trapezoid(np.sqrt(ra * rb), x)), "x_min": float(x[0]), "x_max": float(x[-1])}
