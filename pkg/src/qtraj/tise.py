"""Single-trajectory dynamics for stationary (time-independent) states in 1D.

A scattering state is represented by one trajectory x(t) obeying a fourth-order
autonomous ODE.  Equivalently, the phase-space point (x, p, r, s) evolves under
Hamilton's equations for

    H = s (2p - s) / 2m + V(x) - 2 r^2 s^4 / (m hbar^2)

where s = m xdot is the kinematic momentum and p the conserved particle
momentum of free motion.  Two clocks are offered: ordinary time, and the
position clock, a Poincare time transformation K = (m/s)(H - E) under which x
advances uniformly.  The latter keeps the step meaningful where the velocity
swings over many orders of magnitude (deep tunnelling).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BPoly

from .core import (
    DomainError,
    Eckart,
    Free,
    InputError,
    IntegrationError,
    PhysicalParams,
    Potential,
    SingularityError,
    curvature_potential,
    eval_potential,
    grad_potential,
)
from .stencils import fornberg_weights

METHODS = ("implicit-midpoint", "rk4-adaptive")
CLOCKS = ("time", "position")


@dataclass(frozen=True)
class TrajectoryJet:
    """Position and its first three time derivatives at one instant."""

    x: float
    xdot: float
    xddot: float = 0.0
    xdddot: float = 0.0


@dataclass(frozen=True)
class PhaseState:
    x: float
    p: float
    r: float
    s: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.p, self.r, self.s])

    @classmethod
    def from_array(cls, z) -> "PhaseState":
        return cls(*map(float, z))


def _nonzero_velocity(xdot):
    if xdot == 0 or not math.isfinite(xdot):
        raise SingularityError("trajectory velocity must be finite and nonzero")


def quantum_correction_1d(jet: TrajectoryJet, params: PhysicalParams) -> float:
    """Q = (hbar^2/4m)(x'''/x'^3 - 5/2 x''^2/x'^4), derivatives in time."""
    _nonzero_velocity(jet.xdot)
    v = jet.xdot
    return params.hbar**2 / (4.0 * params.mass) * (jet.xdddot / v**3 - 2.5 * jet.xddot**2 / v**4)


def jet_to_phase(jet: TrajectoryJet, params: PhysicalParams) -> PhaseState:
    _nonzero_velocity(jet.xdot)
    m, hb = params.mass, params.hbar
    v = jet.xdot
    s = m * v
    r = hb**2 * jet.xddot / (4.0 * m**2 * v**4)
    p = m * v + hb**2 / (4.0 * m) * (jet.xdddot / v**4 - 2.0 * jet.xddot**2 / v**5)
    return PhaseState(jet.x, p, r, s)


def phase_to_jet(state: PhaseState, params: PhysicalParams) -> TrajectoryJet:
    """Inverse of :func:`jet_to_phase`."""
    if state.s == 0:
        raise SingularityError("s = 0 has no velocity jet")
    m, hb = params.mass, params.hbar
    v = state.s / m
    a = 4.0 * state.s**4 * state.r / (m**2 * hb**2)
    j = v**4 * ((state.p - state.s) * 4.0 * m / hb**2 + 2.0 * a**2 / v**5)
    return TrajectoryJet(state.x, v, a, j)


def energy_from_jet(jet: TrajectoryJet, pot: Potential, params: PhysicalParams) -> float:
    """T + V + Q evaluated directly on a jet."""
    return (0.5 * params.mass * jet.xdot**2 + float(eval_potential(pot, jet.x, params))
            + quantum_correction_1d(jet, params))


def _energy(z, pot, params):
    x, p, r, s = z
    m, hb = params.mass, params.hbar
    return s * (2.0 * p - s) / (2.0 * m) + float(eval_potential(pot, x, params)) - 2.0 * r * r * s**4 / (m * hb * hb)


def hamiltonian_energy(state: PhaseState, pot: Potential, params: PhysicalParams) -> float:
    z = state.as_array()
    if not np.all(np.isfinite(z)):
        raise DomainError("phase state must be finite")
    return _energy(z, pot, params)


def _rhs_time(z, pot, params):
    x, p, r, s = z
    m, hb2 = params.mass, params.hbar**2
    return np.array([
        s / m,
        -float(grad_potential(pot, x, params)),
        (p - s) / m - 8.0 * r * r * s**3 / (m * hb2),
        4.0 * r * s**4 / (m * hb2),
    ])


def hamilton_rhs(state: PhaseState, pot: Potential, params: PhysicalParams) -> PhaseState:
    """(xdot, pdot, rdot, sdot) packed as a PhaseState."""
    return PhaseState.from_array(_rhs_time(state.as_array(), pot, params))


def _jac_time(z, pot, params):
    x, p, r, s = z
    m, hb2 = params.mass, params.hbar**2
    return np.array([
        [0.0, 0.0, 0.0, 1.0 / m],
        [-float(curvature_potential(pot, x, params)), 0.0, 0.0, 0.0],
        [0.0, 1.0 / m, -16.0 * r * s**3 / (m * hb2), -1.0 / m - 24.0 * r * r * s * s / (m * hb2)],
        [0.0, 0.0, 4.0 * s**4 / (m * hb2), 16.0 * r * s**3 / (m * hb2)],
    ])


class _System:
    """Vector field in the chosen clock; the last slot of the state carries t."""

    def __init__(self, pot, params, clock, energy):
        if clock not in CLOCKS:
            raise DomainError(f"clock must be one of {CLOCKS}")
        self.pot, self.params, self.clock, self.energy = pot, params, clock, energy

    def __call__(self, w):
        z = w[:4]
        if self.clock == "time":
            return np.append(_rhs_time(z, self.pot, self.params), 1.0)
        x, p, r, s = z
        if s == 0:
            raise SingularityError("s reached 0; the position clock is singular there")
        m, hb2 = self.params.mass, self.params.hbar**2
        g = m / s
        dH = _energy(z, self.pot, self.params) - self.energy
        return np.array([
            1.0,
            -g * float(grad_potential(self.pot, x, self.params)),
            (p - s) / s - 8.0 * r * r * s * s / hb2 - m * dH / (s * s),
            4.0 * r * s**3 / hb2,
            g,
        ])

    def jacobian(self, w, eps=1e-7):
        if self.clock == "time":
            J = np.zeros((5, 5))
            J[:4, :4] = _jac_time(w[:4], self.pot, self.params)
            return J
        J = np.zeros((5, 5))
        for j in range(4):
            h = eps * max(1.0, abs(w[j]))
            wp, wm = w.copy(), w.copy()
            wp[j] += h
            wm[j] -= h
            J[:, j] = (self(wp) - self(wm)) / (2.0 * h)
        return J


def _scales(w, params):
    """Characteristic size of each state slot, used by convergence tests.

    r passes through zero; it is measured against its natural size hbar / s.
    """
    x, p, r, s = w[:4]
    mom = abs(p) + abs(s)
    return np.array([max(abs(x), 1.0), mom, abs(r) + params.hbar / max(abs(s), 1e-300), mom,
                     max(abs(w[4]), 1.0)])


def _midpoint_step(sys_, w0, h, tol=1e-15, max_fp=60, max_newton=30):
    """Solve w1 = w0 + h f((w0 + w1)/2); returns (w1, scaled residual)."""
    scale = _scales(w0, sys_.params)
    w1 = w0 + h * sys_(w0)
    converged = False
    with np.errstate(all="ignore"):
        try:
            for _ in range(max_fp):
                w_new = w0 + h * sys_(0.5 * (w0 + w1))
                d = np.max(np.abs(w_new - w1) / scale)
                if not np.isfinite(d):
                    break
                w1 = w_new
                if d <= tol:
                    converged = True
                    break
        except DomainError:
            pass
        if not converged:
            w1 = w0 + h * sys_(w0)
            try:
                for _ in range(max_newton):
                    G = w1 - w0 - h * sys_(0.5 * (w0 + w1))
                    J = np.eye(5) - 0.5 * h * sys_.jacobian(0.5 * (w0 + w1))
                    dw = np.linalg.solve(J, -G)
                    w1 = w1 + dw
                    err = np.max(np.abs(dw) / scale)
                    if not np.isfinite(err):
                        break
                    if err <= tol:
                        converged = True
                        break
            except (DomainError, np.linalg.LinAlgError):
                pass
    if not converged:
        raise IntegrationError(f"implicit midpoint did not converge (step {h!r})")
    res = w1 - w0 - h * sys_(0.5 * (w0 + w1))
    return w1, float(np.max(np.abs(res) / scale))


def _rk4(sys_, w, h):
    k1 = sys_(w)
    k2 = sys_(w + 0.5 * h * k1)
    k3 = sys_(w + 0.5 * h * k2)
    k4 = sys_(w + h * k3)
    return w + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _err_norm(sys_, w, e):
    return float(np.max(np.abs(e) / _scales(w, sys_.params)))


@dataclass
class TisePath:
    """Sampled trajectory; arrays are in integration order."""

    t: np.ndarray
    x: np.ndarray
    p: np.ndarray
    r: np.ndarray
    s: np.ndarray
    params: PhysicalParams
    clock: str = "time"
    method: str = "implicit-midpoint"
    steps: int = 0
    energy0: float = float("nan")
    energy_drift: float = 0.0
    max_step_residual: float = 0.0

    def state(self, i) -> PhaseState:
        return PhaseState(self.x[i], self.p[i], self.r[i], self.s[i])

    def jets(self, pot: Potential | None = None):
        """Columns x, xdot, xddot, xdddot (and x'''' when ``pot`` is given)."""
        m, hb = self.params.mass, self.params.hbar
        v = self.s / m
        a = 4.0 * self.s**4 * self.r / (m**2 * hb**2)
        j = v**4 * ((self.p - self.s) * 4.0 * m / hb**2 + 2.0 * a**2 / v**5)
        cols = [self.x, v, a, j]
        if pot is not None:
            f = m * a + grad_potential(pot, self.x, self.params)
            cols.append(v**4 * (-4.0 * m * f / hb**2 + 8.0 * j * a / v**5 - 10.0 * a**3 / v**6))
        return np.stack(cols, axis=1)

    def interpolant(self, pot: Potential | None = None) -> BPoly:
        """Piecewise Hermite interpolant x(t) matching the stored derivatives."""
        order = np.argsort(self.t)
        t = self.t[order]
        if np.any(np.diff(t) <= 0):
            raise InputError("path has repeated sample times")
        return BPoly.from_derivatives(t, self.jets(pot)[order])


def integrate_tise(state0: PhaseState, pot: Potential, params: PhysicalParams, step: float,
                   t_final: float, method: str = "implicit-midpoint", stride: int = 1,
                   clock: str = "time", tol: float = 1e-12, max_steps: int = 10_000_000) -> TisePath:
    """Integrate Hamilton's equations from ``state0``.

    With ``clock="time"`` the independent variable is t and ``t_final`` is the
    final time; with ``clock="position"`` it is x and ``t_final`` is the final
    position.  A negative ``step`` (or a final value below the start) runs
    backwards.  ``rk4-adaptive`` uses ``step`` as the initial step and ``tol``
    as the local error target; samples are then taken every accepted step
    thinned by ``stride``.
    """
    if method not in METHODS:
        raise DomainError(f"method must be one of {METHODS}")
    if not step or not math.isfinite(step):
        raise DomainError("step must be a nonzero finite number")
    z0 = state0.as_array()
    if not np.all(np.isfinite(z0)):
        raise DomainError("initial state must be finite")
    E0 = _energy(z0, pot, params)
    sys_ = _System(pot, params, clock, E0)
    start = z0[0] if clock == "position" else 0.0
    span = t_final - start
    h = math.copysign(abs(step), span) if span else step
    w = np.append(z0, 0.0)
    out = [w.copy()]
    drift = 0.0
    worst = 0.0
    nsteps = 0
    if method == "implicit-midpoint":
        n = int(round(abs(span) / abs(h)))
        if n > max_steps:
            raise IntegrationError(f"{n} steps exceed max_steps={max_steps}")
        if n and abs(n * abs(h) - abs(span)) > 1e-9 * abs(span):
            h = span / n
        for i in range(1, n + 1):
            try:
                w, res = _midpoint_step(sys_, w, h)
            except (IntegrationError, SingularityError) as exc:
                raise IntegrationError(f"{exc} at step {i}, t={w[4]!r}") from exc
            worst = max(worst, res)
            drift = max(drift, abs(_energy(w[:4], pot, params) - E0))
            if i % stride == 0 or i == n:
                out.append(w.copy())
        nsteps = n
    else:
        pos = 0.0
        accepted = 0
        while abs(pos) < abs(span) * (1 - 1e-15):
            h = math.copysign(min(abs(h), abs(span - pos)), span)
            big = _rk4(sys_, w, h)
            half = _rk4(sys_, _rk4(sys_, w, 0.5 * h), 0.5 * h)
            err = _err_norm(sys_, half, half - big) / 15.0
            if err <= tol or abs(h) < 1e-14 * max(1.0, abs(pos)):
                w = half + (half - big) / 15.0
                pos += h
                accepted += 1
                drift = max(drift, abs(_energy(w[:4], pot, params) - E0))
                if accepted % stride == 0 or abs(pos) >= abs(span) * (1 - 1e-15):
                    out.append(w.copy())
            if accepted > max_steps:
                raise IntegrationError(f"adaptive integration exceeded {max_steps} steps at t={w[4]!r}")
            fac = 0.9 * (tol / err) ** 0.2 if err > 0 else 5.0
            h *= min(5.0, max(0.2, fac))
            if not np.all(np.isfinite(w)):
                raise IntegrationError(f"non-finite state at t={w[4]!r}")
        nsteps = accepted
    arr = np.array(out)
    if np.any(np.sign(arr[:, 3]) != np.sign(z0[3])):
        i = int(np.flatnonzero(np.sign(arr[:, 3]) != np.sign(z0[3]))[0])
        raise SingularityError(f"kinematic momentum s changed sign near t={arr[i, 4]!r}")
    return TisePath(arr[:, 4], arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], params, clock, method,
                    nsteps, E0, drift / max(abs(E0), 1e-300), worst)


def newton_residual_tise(path: TisePath, pot: Potential, width: int = 7):
    """Defect of the fourth-order trajectory ODE by finite differences in t.

    Needs uniformly spaced samples.  Returns (max, rms, pointwise) over points
    where the centred stencil fits.
    """
    t = np.asarray(path.t, dtype=float)
    if len(t) < width:
        raise InputError(f"need at least {width} samples, got {len(t)}")
    dt = np.diff(t)
    if np.max(np.abs(dt - dt.mean())) > 1e-9 * abs(dt.mean()):
        raise InputError("newton residual needs uniformly sampled times")
    h = dt.mean()
    half = width // 2
    local = np.arange(-half, half + 1, dtype=float)
    W = [fornberg_weights(0.0, local, k) / h**k for k in (1, 2, 3, 4)]
    x = np.asarray(path.x)
    idx = np.arange(half, len(x) - half)[:, None] + np.arange(-half, half + 1)[None, :]
    X = x[idx]
    d1, d2, d3, d4 = (X @ w for w in W)
    m, hb = path.params.mass, path.params.hbar
    xc = x[half:len(x) - half]
    res = m * d2 + grad_potential(pot, xc, path.params) + hb**2 / (4 * m) * (
        d4 / d1**4 - 8.0 * d3 * d2 / d1**5 + 10.0 * d2**3 / d1**6)
    a = np.abs(res)
    return float(a.max()), float(np.sqrt(np.mean(a * a))), res


# -- scattering --------------------------------------------------------------


@dataclass(frozen=True)
class ScatterOptions:
    step: float = 0.05
    flatten_tol: float = 1e-12
    window: float = 1.0
    method: str = "rk4-adaptive"
    tol: float = 1e-13
    launch_tol: float = 1e-18
    max_span: float = 2000.0


@dataclass(frozen=True)
class ScatterResult:
    energy: float
    k: float
    p_asymptotic: float
    reflection: float
    transmission: float
    flattening_time: float
    reflection_oscillation: float = float("nan")
    energy_drift: float = 0.0
    p_variation: float = 0.0
    steps: int = 0
    path: TisePath | None = field(default=None, repr=False, compare=False)


def reflection_from_p(p_asym: float, k: float, params: PhysicalParams) -> tuple[float, float]:
    """(R, T) from the asymptotic particle momentum, p = hbar k (1 + R)/(1 - R)."""
    hk = params.hbar * k
    T = 2.0 * hk / (p_asym + hk)
    R = (p_asym - hk) / (p_asym + hk)
    return R, T


def reflection_from_oscillation(vmax: float, vmin: float) -> float:
    """R from the velocity contrast of a two-wave stationary state."""
    q = math.sqrt(vmax / vmin)
    return ((q - 1.0) / (q + 1.0)) ** 2


def _support_edges(pot: Potential, params: PhysicalParams, energy: float, launch_tol: float):
    if isinstance(pot, Free):
        return -1.0, 1.0
    if isinstance(pot, Eckart):
        # V ~ 4 v0 exp(-2|z|); place the launch where V is negligible next to E
        z = 0.5 * math.log(4.0 * pot.v0 / (launch_tol * energy)) if 4.0 * pot.v0 > launch_tol * energy else 1.0
        z = max(z, 1.0)
        return pot.center - z * pot.width, pot.center + z * pot.width
    raise DomainError("scattering needs a potential with (numerically) finite support such as Eckart")


def _s_extrema(path: TisePath, lo_index: int):
    """Values of s at the zero crossings of r (where sdot = 0) past ``lo_index``."""
    r, s, x = path.r, path.s, path.x
    hb2 = path.params.hbar**2
    vals = []
    for i in range(max(lo_index, 0), len(r) - 1):
        if r[i] == 0.0 or r[i] * r[i + 1] < 0.0:
            if r[i] == 0.0:
                vals.append(s[i])
                continue
            # cubic Hermite for s(x) using ds/dx = 4 r s^3 / hbar^2 at both ends
            x0, x1 = x[i], x[i + 1]
            hx = x1 - x0
            th = r[i] / (r[i] - r[i + 1])
            g0 = 4.0 * r[i] * s[i] ** 3 / hb2 * hx
            g1 = 4.0 * r[i + 1] * s[i + 1] ** 3 / hb2 * hx
            h00 = 2 * th**3 - 3 * th**2 + 1
            h10 = th**3 - 2 * th**2 + th
            h01 = -2 * th**3 + 3 * th**2
            h11 = th**3 - th**2
            vals.append(h00 * s[i] + h10 * g0 + h01 * s[i + 1] + h11 * g1)
    return np.array(vals)


def scattering_run(pot: Potential, params: PhysicalParams, k: float,
                   opts: ScatterOptions = ScatterOptions(), keep_path: bool = False) -> ScatterResult:
    """Transmission probability from one trajectory.

    The trajectory starts as a pure plane wave (r = 0, s = p = hbar k) on the
    transmitted side where V is negligible and is integrated backwards, with
    the position clock, into the incident region until p stops changing over
    a trailing window of ``opts.window`` local oscillation periods (pi/k in x).
    """
    if not k > 0:
        raise DomainError("wavenumber must be positive")
    hk = params.hbar * k
    E = hk**2 / (2.0 * params.mass)
    left, right = _support_edges(pot, params, E, opts.launch_tol)
    period = math.pi / k
    state0 = PhaseState(right, hk, 0.0, hk)
    # integrate over the support, then one window at a time until p is flat
    seg_end = left - opts.window * period
    path = integrate_tise(state0, pot, params, -abs(opts.step), seg_end, opts.method, clock="position", tol=opts.tol)
    paths = [path]
    variation = float("inf")
    while True:
        x = path.x
        win = x <= x[-1] + opts.window * period
        pw = path.p[win]
        variation = float((pw.max() - pw.min()) / abs(pw).max())
        if variation <= opts.flatten_tol and x[-1] <= left - opts.window * period:
            break
        if right - x[-1] > opts.max_span:
            raise IntegrationError(f"p did not flatten within span {opts.max_span}; best variation {variation:.3e}")
        nxt = integrate_tise(path.state(-1), pot, params, -abs(opts.step), x[-1] - opts.window * period,
                             opts.method, clock="position", tol=opts.tol)
        nxt.t += path.t[-1]
        path = _concat(path, nxt)
    p_asym = float(path.p[-1])
    R, T = reflection_from_p(p_asym, k, params)
    # velocity contrast over the trailing oscillation
    start = int(np.searchsorted(-path.x, -(path.x[-1] + opts.window * period)))
    ext = _s_extrema(path, start)
    if len(ext) >= 2:
        R_osc = reflection_from_oscillation(float(np.max(np.abs(ext))), float(np.min(np.abs(ext))))
    else:
        R_osc = float("nan")
    return ScatterResult(E, k, p_asym, R, T, float(abs(path.t[-1])), R_osc, path.energy_drift, variation,
                         path.steps, path if keep_path else None)


def _concat(a: TisePath, b: TisePath) -> TisePath:
    return TisePath(
        np.concatenate([a.t, b.t[1:]]), np.concatenate([a.x, b.x[1:]]), np.concatenate([a.p, b.p[1:]]),
        np.concatenate([a.r, b.r[1:]]), np.concatenate([a.s, b.s[1:]]), a.params, a.clock, a.method,
        a.steps + b.steps, a.energy0,
        max(a.energy_drift, abs(b.energy0 + b.energy_drift * abs(b.energy0) - a.energy0) / abs(a.energy0), b.energy_drift),
        max(a.max_step_residual, b.max_step_residual))
