"""Trajectory-ensemble solver for one-dimensional time-dependent dynamics.

The state is a family of trajectories x(C, t) labelled by a uniformizing
coordinate C in [epsilon, 1 - epsilon], so the density at a trajectory is
1 / (dx/dC).  The ensemble obeys

    m x_tt + V'(x) + (hbar^2 / 4m) (x''''/x'^4 - 8 x''' x''/x'^5 + 10 x''^3/x'^6) = 0

with primes denoting C derivatives.  Time stepping is velocity Verlet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import BPoly

from . import analytic
from .core import (
    BlowupError,
    CrossingError,
    DomainError,
    InputError,
    PhysicalParams,
    Potential,
    SingularityError,
    grad_potential,
)
from .stencils import StencilSet, stencil_set_for


class NormalizationError(ValueError):
    def __init__(self, integral):
        super().__init__(f"initial density integrates to {integral!r}, not 1")
        self.integral = integral


@dataclass(frozen=True)
class Ensemble1D:
    """One time slice of the ensemble.

    ``coordinate`` selects the stencil family used for C derivatives (see
    :mod:`qtraj.stencils`); Gaussian-like packets should use ``"quantile"``.
    """

    t: float
    epsilon: float
    c_grid: np.ndarray
    x: np.ndarray
    v: np.ndarray
    coordinate: str = "uniform"

    def __post_init__(self):
        if not 0.0 < self.epsilon < 0.5:
            raise DomainError(f"epsilon must lie in (0, 0.5), got {self.epsilon!r}")
        c = np.asarray(self.c_grid, dtype=float)
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if c.ndim != 1 or len(c) < 7:
            raise InputError("an ensemble needs at least 7 trajectories")
        if x.shape != c.shape or v.shape != c.shape:
            raise InputError("x, v and c_grid must have equal length")
        dc = np.diff(c)
        if np.max(np.abs(dc - dc.mean())) > 1e-12 * max(1.0, abs(dc.mean())) * len(c):
            raise InputError("c_grid must be uniform")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise BlowupError(f"non-finite ensemble values at t={self.t!r}")
        bad = np.flatnonzero(np.diff(x) <= 0.0)
        if bad.size:
            raise CrossingError(f"trajectories {bad[0]} and {bad[0] + 1} crossed at t={self.t!r}", int(bad[0]))
        object.__setattr__(self, "c_grid", c)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def n_c(self) -> int:
        return len(self.c_grid)

    @property
    def dc(self) -> float:
        return float(self.c_grid[1] - self.c_grid[0])

    def stencils(self) -> StencilSet:
        return stencil_set_for(self.c_grid, self.coordinate)


@dataclass(frozen=True)
class CDerivatives:
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    d4: np.ndarray


def c_grid(n_c: int, epsilon: float) -> np.ndarray:
    if not 0.0 < epsilon < 0.5:
        raise DomainError(f"epsilon must lie in (0, 0.5), got {epsilon!r}")
    if n_c < 7:
        raise DomainError(f"n_c must be at least 7, got {n_c}")
    return np.linspace(epsilon, 1.0 - epsilon, int(n_c))


# -- uniformizing map -------------------------------------------------------


class UniformizingMap:
    """Monotone map C -> x0 with C = int_{lo}^{x0} rho0."""

    def __init__(self, rho0: Callable[[float], float], lo: float, hi: float, panels: int = 64):
        self.rho0 = rho0
        self.edges = np.linspace(lo, hi, panels + 1)
        parts = [integrate.quad(rho0, a, b, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
                 for a, b in zip(self.edges[:-1], self.edges[1:])]
        self.cdf_edges = np.concatenate([[0.0], np.cumsum(parts)])

    @property
    def total(self) -> float:
        return float(self.cdf_edges[-1])

    def cdf(self, x: float) -> float:
        k = int(np.clip(np.searchsorted(self.edges, x) - 1, 0, len(self.edges) - 2))
        return self.cdf_edges[k] + integrate.quad(self.rho0, self.edges[k], x, epsabs=1e-15, epsrel=1e-13)[0]

    def _invert(self, C: float) -> float:
        if not 0.0 < C < 1.0:
            raise DomainError("C must lie strictly inside (0, 1)")
        k = int(np.clip(np.searchsorted(self.cdf_edges, C) - 1, 0, len(self.edges) - 2))
        a, b = self.edges[k], self.edges[k + 1]
        base = self.cdf_edges[k]

        def f(x):
            return base + integrate.quad(self.rho0, a, x, epsabs=1e-15, epsrel=1e-13)[0] - C

        return optimize.brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)

    def __call__(self, C):
        C = np.asarray(C, dtype=float)
        out = np.array([self._invert(c) for c in C.ravel()]).reshape(C.shape)
        return out[()] if out.ndim == 0 else out


def build_uniformizing_map(rho0: Callable[[float], float], domain: tuple[float, float],
                           quadrature_tol: float = 1e-10) -> UniformizingMap:
    """Trajectory labels that make the label-space density uniform.

    ``rho0`` must integrate to one over ``domain`` within ``quadrature_tol``.
    """
    lo, hi = map(float, domain)
    if not lo < hi:
        raise DomainError("domain must be an increasing interval")
    umap = UniformizingMap(rho0, lo, hi)
    if abs(umap.total - 1.0) > quadrature_tol:
        raise NormalizationError(umap.total)
    return umap


def ensemble_from_density(rho0, domain, v0: Callable, n_c: int, epsilon: float,
                          t: float = 0.0, coordinate: str = "uniform",
                          quadrature_tol: float = 1e-10) -> Ensemble1D:
    """Initial ensemble from an explicit (density, velocity field) pair."""
    C = c_grid(n_c, epsilon)
    x0 = build_uniformizing_map(rho0, domain, quadrature_tol)(C)
    return Ensemble1D(t, epsilon, C, x0, np.asarray(v0(x0), dtype=float), coordinate)


def free_gaussian_ensemble(gp: analytic.GaussianParams, params: PhysicalParams, n_c: int,
                           epsilon: float, t: float | None = None) -> Ensemble1D:
    t = gp.t0 if t is None else t
    C = c_grid(n_c, epsilon)
    return Ensemble1D(t, epsilon, C, analytic.free_gaussian_x(gp, params, C, t),
                      analytic.free_gaussian_v(gp, params, C, t), "quantile")


def ho_gaussian_ensemble(gp: analytic.GaussianParams, params: PhysicalParams, omega: float,
                         n_c: int, epsilon: float, t: float | None = None) -> Ensemble1D:
    t = gp.t0 if t is None else t
    C = c_grid(n_c, epsilon)
    return Ensemble1D(t, epsilon, C, analytic.ho_gaussian_x(gp, params, omega, C, t),
                      analytic.ho_gaussian_v(gp, params, omega, C, t), "quantile")


# -- derivatives and forces -------------------------------------------------


def _derivs(st: StencilSet, x) -> np.ndarray:
    d = st.apply(x)
    if not np.all(np.isfinite(d)):
        raise BlowupError("non-finite C derivatives")
    bad = np.flatnonzero(d[0] <= 0.0)
    if bad.size:
        raise CrossingError(f"dx/dC <= 0 at grid index {bad[0]} (trajectory crossing)", int(bad[0]))
    return d


def c_derivatives(ens: Ensemble1D) -> CDerivatives:
    d = _derivs(ens.stencils(), ens.x)
    return CDerivatives(*d)


def _qforce(d1, d2, d3, d4, params: PhysicalParams):
    k = params.hbar**2 / (4.0 * params.mass)
    i1 = 1.0 / d1
    i4 = i1**4
    return -k * i4 * (d4 - 8.0 * d3 * d2 * i1 + 10.0 * d2**3 * i1 * i1)


def quantum_force_1d(der: CDerivatives, params: PhysicalParams) -> np.ndarray:
    """Quantum force per trajectory, so that m x_tt = -V'(x) + force."""
    d1 = np.asarray(der.d1, dtype=float)
    if np.any(d1 <= 0.0):
        raise SingularityError("quantum force needs dx/dC > 0 everywhere")
    return _qforce(d1, der.d2, der.d3, der.d4, params)


def q_density_1d(der: CDerivatives, params: PhysicalParams) -> np.ndarray:
    """Quantum correction Q = (hbar^2/4m)(x'''/x'^3 - 5/2 x''^2/x'^4) per trajectory."""
    k = params.hbar**2 / (4.0 * params.mass)
    d1 = np.asarray(der.d1)
    return k * (der.d3 / d1**3 - 2.5 * der.d2**2 / d1**4)


def acceleration(st: StencilSet, x, pot: Potential, params: PhysicalParams, origin: float = 0.0) -> np.ndarray:
    """Acceleration of every trajectory; positions are ``origin + x``."""
    d = _derivs(st, x)
    xa = x + origin if origin else x
    a = (_qforce(d[0], d[1], d[2], d[3], params) - grad_potential(pot, xa, params)) / params.mass
    if not np.all(np.isfinite(a)):
        i = int(np.flatnonzero(~np.isfinite(a))[0])
        raise BlowupError(f"non-finite acceleration at grid index {i}, x={xa[i]!r}, dx/dC={d[0][i]!r}")
    return a


def cfl_timestep(ens: Ensemble1D, params: PhysicalParams, safety: float = 0.5) -> float:
    """Largest stable Verlet step for the stiffest (most compressed) trajectory spacing.

    The centred 5-point fourth-derivative stencil has symbol at most 16/dC^4,
    so the fastest linear mode has frequency 2 hbar / (m dC^2 x'^2).
    """
    d1 = c_derivatives(ens).d1
    return safety * params.mass * ens.dc**2 * float(np.min(d1)) ** 2 / params.hbar


def step_stormer_verlet(ens: Ensemble1D, dt: float, pot: Potential, params: PhysicalParams) -> Ensemble1D:
    if not dt > 0:
        raise DomainError("dt must be positive")
    return next(evolve(ens, dt, 1, pot, params, stride=1))


def evolve(ens: Ensemble1D, dt: float, n_steps: int, pot: Potential, params: PhysicalParams,
           stride: int = 1) -> Iterator[Ensemble1D]:
    """Velocity-Verlet propagation yielding every ``stride``-th slice (not the start).

    ``dt`` may be negative to run backwards in time.
    """
    st = ens.stencils()
    # Positions are carried relative to a uniformly moving origin.  For a
    # packet that drifts away from x = 0 this keeps rounding symmetric about
    # the packet, which otherwise biases the total momentum at the 1e-8 level.
    mid = ens.n_c // 2
    x0, u = float(ens.x[mid]), float(ens.v[mid])
    x = ens.x - x0
    v = ens.v - u
    a = acceleration(st, x, pot, params, x0)
    half = 0.5 * dt
    for k in range(1, n_steps + 1):
        origin = x0 + u * (k * dt)
        v += half * a
        x += dt * v
        try:
            a = acceleration(st, x, pot, params, origin)
        except (CrossingError, BlowupError) as exc:
            raise type(exc)(f"{exc} (step {k}, t={ens.t + k * dt!r})") from exc
        v += half * a
        if k % stride == 0 or k == n_steps:
            yield Ensemble1D(ens.t + k * dt, ens.epsilon, ens.c_grid, x + origin, v + u, ens.coordinate)


def run(ens: Ensemble1D, t_final: float, pot: Potential, params: PhysicalParams,
        dt: float | None = None, safety: float = 0.5, stride: int | None = None) -> list[Ensemble1D]:
    """Integrate to ``t_final`` with a fixed step (CFL-guarded when ``dt`` is None).

    Returns the snapshots including the initial slice; the step is shrunk so an
    integer number of steps lands exactly on ``t_final``.
    """
    span = t_final - ens.t
    if span <= 0:
        return [ens]
    dt_max = cfl_timestep(ens, params, safety)
    dt = dt_max if dt is None else min(dt, dt_max)
    n = int(math.ceil(span / dt - 1e-9))
    dt = span / n
    stride = n if stride is None else stride
    return [ens, *evolve(ens, dt, n, pot, params, stride)]


# -- residual diagnostics ---------------------------------------------------


@dataclass(frozen=True)
class ResidualNorms:
    max: float
    rms: float
    pointwise: np.ndarray = field(repr=False)


def _check_slices(slices: Sequence[Ensemble1D], rtol: float = 1e-9) -> float:
    if len(slices) != 3:
        raise InputError("need exactly three consecutive slices")
    a, b, c = slices
    for s in (b, c):
        if s.c_grid.shape != a.c_grid.shape or np.max(np.abs(s.c_grid - a.c_grid)) > 1e-14:
            raise InputError("slices live on different C grids")
    dt1, dt2 = b.t - a.t, c.t - b.t
    if dt1 == 0 or abs(dt1 - dt2) > rtol * abs(dt1) + 1e-15:
        raise InputError(f"slices are not evenly spaced in time ({dt1!r} vs {dt2!r})")
    return 0.5 * (dt1 + dt2)


def interior(n: int, width: int = 5) -> slice:
    h = width // 2
    return slice(h, n - h)


def pde_residual(slices: Sequence[Ensemble1D], pot: Potential, params: PhysicalParams) -> ResidualNorms:
    """Defect of the ensemble equation on the middle slice, in force units.

    Time derivative by central differences, C derivatives by the middle slice's
    stencils; norms over points with centred stencils only.
    """
    dt = _check_slices(slices)
    lo, mid, hi = slices
    xtt = (hi.x - 2.0 * mid.x + lo.x) / dt**2
    der = c_derivatives(mid)
    res = params.mass * xtt + grad_potential(pot, mid.x, params) - quantum_force_1d(der, params)
    r = np.abs(res[interior(mid.n_c)])
    return ResidualNorms(float(r.max()), float(np.sqrt(np.mean(r * r))), res)


# -- travelling-wave lift ----------------------------------------------------


def travelling_wave_lift(path, lam: float, c_values, t0: float = 0.0, epsilon: float | None = None,
                         pot: Potential | None = None, params: PhysicalParams | None = None,
                         coordinate: str = "uniform") -> Ensemble1D:
    """Ensemble x(C, t0) = x(t0 - lam C) built from a single stationary trajectory.

    ``path`` is a :class:`qtraj.tise.TisePath`; it is Hermite-interpolated
    using the time derivatives implied by its phase-space states.
    """
    if lam == 0 or not math.isfinite(lam):
        raise DomainError("lambda must be a nonzero real")
    C = np.asarray(c_values, dtype=float)
    interp = path.interpolant(pot)
    tau = t0 - lam * C
    lo, hi = interp.x[0], interp.x[-1]
    if tau.min() < lo or tau.max() > hi:
        raise InputError(f"path covers t in [{lo!r}, {hi!r}] but the lift needs [{tau.min()!r}, {tau.max()!r}]")
    x = interp(tau)
    v = interp.derivative()(tau)
    if epsilon is None:
        epsilon = float(C[0])
    return Ensemble1D(t0, epsilon, C, x, v, coordinate)
