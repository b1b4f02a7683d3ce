"""Trajectory ensembles in two configuration-space dimensions.

Trajectories x^i(C^1, C^2, t) live on a tensor-product label grid with unit
label density, so rho = 1/det J with J^i_j = dx^i/dC^j.  The quantum force is

    F_i = (hbar^2/4m) d/dC^m ( K^k_i K^m_j d^2 K^l_j / dC^k dC^l ),   K = J^-1.

By default the derivatives of K come from the derivatives of x through
dK = -K dJ K and its higher analogues ("chain"), which in one dimension is
algebraically the same as the 1D solver's direct formula.  Differencing K
nodewise ("nested") is kept for comparison; with one-sided edge stencils
it is far less accurate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.integrate import simpson

from . import analytic
from .core import BlowupError, CrossingError, DomainError, InputError, PhysicalParams
from .ensemble1d import c_grid as make_c_grid
from .stencils import StencilSet, stencil_set_for

NDIM = 2
FORCE_METHODS = ("chain", "nested")


@dataclass(frozen=True)
class Potential2D:
    """Separable potential V1(x^1) + V2(x^2) built from 1D potentials."""

    axes: tuple

    def value(self, x, params):
        from .core import eval_potential
        return sum(eval_potential(p, x[i], params) for i, p in enumerate(self.axes))

    def gradient(self, x, params):
        from .core import grad_potential
        return np.stack([grad_potential(p, x[i], params) for i, p in enumerate(self.axes)])


@dataclass(frozen=True)
class EnsembleManyD:
    """One time slice; ``x`` and ``v`` have shape (2, n1, n2)."""

    t: float
    epsilon: float
    c_axes: tuple
    x: np.ndarray
    v: np.ndarray
    coordinate: tuple = ("uniform", "uniform")
    n: int = NDIM

    def __post_init__(self):
        if self.n != NDIM:
            raise DomainError("only n = 2 is supported")
        axes = tuple(np.asarray(c, dtype=float) for c in self.c_axes)
        shape = tuple(len(c) for c in axes)
        if min(shape) < 7:
            raise InputError("need at least 7 grid points per axis")
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if x.shape != (NDIM, *shape) or v.shape != x.shape:
            raise InputError(f"x and v must have shape {(NDIM, *shape)}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise BlowupError(f"non-finite ensemble values at t={self.t!r}")
        object.__setattr__(self, "c_axes", axes)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        if isinstance(self.coordinate, str):
            object.__setattr__(self, "coordinate", (self.coordinate, self.coordinate))

    @property
    def shape(self) -> tuple:
        return tuple(len(c) for c in self.c_axes)

    def stencils(self) -> tuple[StencilSet, StencilSet]:
        return tuple(stencil_set_for(c, crd) for c, crd in zip(self.c_axes, self.coordinate))

    def mesh(self):
        return np.meshgrid(*self.c_axes, indexing="ij")


def _partials(st, f, max_order=4) -> dict:
    """All partial derivatives d^(p+q) f / dC1^p dC2^q with p + q <= max_order."""
    s1, s2 = st
    along1 = {0: f}
    along1.update({p: s1.apply(f, p, axis=-2) for p in range(1, max_order + 1)})
    out = {}
    for p in range(max_order + 1):
        out[(p, 0)] = along1[p]
        for q in range(1, max_order - p + 1):
            out[(p, q)] = s2.apply(along1[p], q, axis=-1)
    return out


def _e(a):
    return (1, 0) if a == 0 else (0, 1)


def _add(*alphas):
    return tuple(sum(c) for c in zip(*alphas))


@dataclass(frozen=True)
class JacobiField:
    """J[i, j] = dx^i/dC^j per node (arrays shaped (2, 2, n1, n2)), K = J^-1."""

    J: np.ndarray
    K: np.ndarray
    detJ: np.ndarray
    partials: dict = field(default=None, repr=False)
    stencils: tuple = field(default=None, repr=False)

    def identity_error(self) -> float:
        I = np.einsum("ij...,jk...->ik...", self.J, self.K)
        return float(np.max(np.abs(I - np.eye(NDIM)[:, :, None, None])))


def _inverse(J):
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    K = np.empty_like(J)
    K[0, 0] = J[1, 1] / det
    K[1, 1] = J[0, 0] / det
    K[0, 1] = -J[0, 1] / det
    K[1, 0] = -J[1, 0] / det
    return K, det


def jacobi_field(ens: EnsembleManyD) -> JacobiField:
    st = ens.stencils()
    P = _partials(st, ens.x)
    J = np.empty((NDIM, NDIM, *ens.shape))
    for j in range(NDIM):
        J[:, j] = P[_e(j)]
    K, det = _inverse(J)
    bad = np.argwhere(~(det > 0))
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        raise CrossingError(f"det J <= 0 at node {idx} (fold) at t={ens.t!r}", idx)
    return JacobiField(J, K, det, P, st)


def _jac_derivs(jf: JacobiField):
    """dJ[a], d2J[a][b], d3J[a][b][c] as (2, 2, n1, n2) arrays."""
    P = jf.partials

    def Jd(*axes):
        out = np.empty_like(jf.J)
        for j in range(NDIM):
            out[:, j] = P[_add(_e(j), *(_e(a) for a in axes))]
        return out

    return Jd


def _mm(A, B):
    return np.einsum("ij...,jk...->ik...", A, B)


def _k_derivs_chain(jf: JacobiField):
    """First, second and third C-derivatives of K from those of J."""
    K = jf.K
    Jd = _jac_derivs(jf)
    r = range(NDIM)
    dJ = {a: Jd(a) for a in r}
    d2J = {(a, b): Jd(a, b) for a in r for b in r}
    d3J = {(a, b, c): Jd(a, b, c) for a in r for b in r for c in r}
    dK = {a: -_mm(K, _mm(dJ[a], K)) for a in r}
    d2K = {}
    for a, b in product(r, r):
        d2K[a, b] = -(_mm(dK[b], _mm(dJ[a], K)) + _mm(K, _mm(d2J[a, b], K)) + _mm(K, _mm(dJ[a], dK[b])))
    d3K = {}
    for a, b, c in product(r, r, r):
        d3K[a, b, c] = -(
            _mm(d2K[b, c], _mm(dJ[a], K)) + _mm(dK[b], _mm(d2J[a, c], K)) + _mm(dK[b], _mm(dJ[a], dK[c]))
            + _mm(dK[c], _mm(d2J[a, b], K)) + _mm(K, _mm(d3J[a, b, c], K)) + _mm(K, _mm(d2J[a, b], dK[c]))
            + _mm(dK[c], _mm(dJ[a], dK[b])) + _mm(K, _mm(d2J[a, c], dK[b])) + _mm(K, _mm(dJ[a], d2K[b, c])))
    return dK, d2K, d3K


def quantum_force_manyd(jf: JacobiField, params: PhysicalParams, method: str = "chain") -> np.ndarray:
    """Force per component, shape (2, n1, n2), with m xddot^i = -dV/dx^i + F_i."""
    if method not in FORCE_METHODS:
        raise DomainError(f"method must be one of {FORCE_METHODS}")
    if not np.all(jf.detJ > 0):
        raise CrossingError("singular Jacobi matrix")
    K = jf.K
    coef = params.hbar**2 / (4.0 * params.mass)
    r = range(NDIM)
    if method == "nested":
        st = jf.stencils
        P = _partials(st, K, max_order=2)
        # D[k, j] = sum_l d_k d_l K[l, j]
        D = np.zeros_like(K)
        for k, l in product(r, r):
            D[k] += P[_add(_e(k), _e(l))][l]
        G = np.einsum("ki...,mj...,kj...->mi...", K, K, D)
        F = np.zeros((NDIM, *K.shape[2:]))
        for m in r:
            F += st[m].apply(G[m], 1, axis=-2 if m == 0 else -1)
        return coef * F
    dK, d2K, d3K = _k_derivs_chain(jf)
    D = np.zeros_like(K)
    dD = {m: np.zeros_like(K) for m in r}
    for k, l in product(r, r):
        D[k] += d2K[k, l][l]
        for m in r:
            dD[m][k] += d3K[k, l, m][l]
    F = np.zeros((NDIM, *K.shape[2:]))
    for m in r:
        F += np.einsum("ki...,j...,kj...->i...", dK[m], K[m], D)
        F += np.einsum("ki...,j...,kj...->i...", K, dK[m][m], D)
        F += np.einsum("ki...,j...,kj...->i...", K, K[m], dD[m])
    return coef * F


def q_density_manyd(jf: JacobiField, params: PhysicalParams) -> np.ndarray:
    """Q = -(hbar^2/4m)(K^k_j d_l d_k K^l_j + 1/2 d_l K^l_j d_k K^k_j)."""
    dK, d2K, _ = _k_derivs_chain(jf)
    r = range(NDIM)
    K = jf.K
    div = sum(dK[l][l] for l in r)  # div[j] = d_l K^l_j
    term = sum(K[k] * d2K[l, k][l] for k, l in product(r, r)).sum(axis=0)
    return -params.hbar**2 / (4.0 * params.mass) * (term + 0.5 * np.sum(div * div, axis=0))


def acceleration_manyd(ens_or_x, pot2d, params: PhysicalParams, template: EnsembleManyD | None = None,
                       method: str = "chain") -> np.ndarray:
    ens = ens_or_x if template is None else _with_x(template, ens_or_x)
    jf = jacobi_field(ens)
    a = quantum_force_manyd(jf, params, method)
    if pot2d is not None:
        a = a - pot2d.gradient(ens.x, params)
    a /= params.mass
    if not np.all(np.isfinite(a)):
        raise BlowupError(f"non-finite acceleration at t={ens.t!r}")
    return a


def _with_x(template: EnsembleManyD, x, v=None, t=None) -> EnsembleManyD:
    return EnsembleManyD(template.t if t is None else t, template.epsilon, template.c_axes, x,
                         template.v if v is None else v, template.coordinate)


def cfl_timestep_manyd(ens: EnsembleManyD, params: PhysicalParams, safety: float = 0.5) -> float:
    """1D guard applied with the smallest singular value of J per axis spacing."""
    jf = jacobi_field(ens)
    J = np.moveaxis(jf.J, (0, 1), (-2, -1))
    smin = np.linalg.svd(J, compute_uv=False)[..., -1]
    dc = min(float(c[1] - c[0]) for c in ens.c_axes)
    return safety * params.mass * dc**2 * float(np.min(smin)) ** 2 / params.hbar


def evolve_manyd(ens: EnsembleManyD, dt: float, n_steps: int, pot2d, params: PhysicalParams,
                 stride: int = 1, method: str = "chain"):
    x = ens.x.copy()
    v = ens.v.copy()
    a = acceleration_manyd(ens, pot2d, params, method=method)
    for k in range(1, n_steps + 1):
        v += 0.5 * dt * a
        x += dt * v
        t = ens.t + k * dt
        try:
            a = acceleration_manyd(_with_x(ens, x, v, t), pot2d, params, method=method)
        except (CrossingError, BlowupError) as exc:
            raise type(exc)(f"{exc} (step {k})") from exc
        v += 0.5 * dt * a
        if k % stride == 0 or k == n_steps:
            yield _with_x(ens, x.copy(), v.copy(), t)


def step_manyd(ens: EnsembleManyD, dt: float, pot2d, params: PhysicalParams) -> EnsembleManyD:
    if not dt > 0:
        raise DomainError("dt must be positive")
    return next(evolve_manyd(ens, dt, 1, pot2d, params))


def run_manyd(ens: EnsembleManyD, t_final: float, pot2d, params: PhysicalParams, dt: float | None = None,
              safety: float = 0.5, stride: int | None = None, method: str = "chain") -> list[EnsembleManyD]:
    span = t_final - ens.t
    if span <= 0:
        return [ens]
    dt_max = cfl_timestep_manyd(ens, params, safety)
    dt = dt_max if dt is None else min(dt, dt_max)
    n = int(math.ceil(span / dt - 1e-9))
    dt = span / n
    return [ens, *evolve_manyd(ens, dt, n, pot2d, params, n if stride is None else stride, method)]


# -- initial data and diagnostics --------------------------------------------


def product_gaussian_ensemble(gps: tuple, params: PhysicalParams, n_c, epsilon: float,
                              t: float = 0.0, rotation: float = 0.0) -> EnsembleManyD:
    """Free Gaussian product x = R(theta) (x1(C1), x2(C2)) at time ``t``.

    With a rotation the label grid is no longer aligned with the x axes, so J
    has off-diagonal entries, while the flow stays an exact free solution.
    """
    n1, n2 = (n_c, n_c) if np.isscalar(n_c) else n_c
    c1, c2 = make_c_grid(n1, epsilon), make_c_grid(n2, epsilon)
    C1, C2 = np.meshgrid(c1, c2, indexing="ij")
    x = np.stack([analytic.free_gaussian_x(gps[0], params, C1, t), analytic.free_gaussian_x(gps[1], params, C2, t)])
    v = np.stack([analytic.free_gaussian_v(gps[0], params, C1, t), analytic.free_gaussian_v(gps[1], params, C2, t)])
    if rotation:
        c, s = math.cos(rotation), math.sin(rotation)
        R = np.array([[c, -s], [s, c]])
        x = np.einsum("ij,j...->i...", R, x)
        v = np.einsum("ij,j...->i...", R, v)
    return EnsembleManyD(t, epsilon, (c1, c2), x, v, ("quantile", "quantile"))


def density_manyd(ens: EnsembleManyD) -> np.ndarray:
    return 1.0 / jacobi_field(ens).detJ


def curl(ens: EnsembleManyD) -> np.ndarray:
    """dv^2/dx^1 - dv^1/dx^2 with d/dx^i = K^k_i d/dC^k."""
    jf = jacobi_field(ens)
    st = jf.stencils
    dv = [st[0].apply(ens.v, 1, axis=-2), st[1].apply(ens.v, 1, axis=-1)]  # dv[k][i] = d v^i / dC^k
    K = jf.K
    d2_1 = sum(K[k, 0] * dv[k][1] for k in range(NDIM))
    d1_2 = sum(K[k, 1] * dv[k][0] for k in range(NDIM))
    return d2_1 - d1_2


def interior_mask(shape, margin: int = 2) -> tuple:
    return tuple(slice(margin, n - margin) for n in shape)


def total_energy_manyd(ens: EnsembleManyD, pot2d, params: PhysicalParams) -> float:
    jf = jacobi_field(ens)
    e = 0.5 * params.mass * np.sum(ens.v**2, axis=0) + q_density_manyd(jf, params)
    if pot2d is not None:
        e = e + pot2d.value(ens.x, params)
    return float(simpson(simpson(e, x=ens.c_axes[1], axis=1), x=ens.c_axes[0]))
