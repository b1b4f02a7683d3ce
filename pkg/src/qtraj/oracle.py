"""Grid-based Schroedinger reference solvers.

Nothing in the trajectory core imports this module; it is here so tests and
the CLI can check trajectory results against a conventional wavefunction
calculation.  Complex amplitudes live only in this file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, sparse
from scipy.sparse.linalg import splu

from .analytic import GaussianParams, free_gaussian_wavefunction
from .core import DomainError, Eckart, PhysicalParams, Potential, eval_potential

SCHEMES = ("split-operator", "crank-nicolson")


class StabilityError(RuntimeError):
    """Norm drifted beyond the allowed bound during propagation."""


@dataclass(frozen=True)
class Wavefield:
    x_grid: np.ndarray
    amplitude: np.ndarray  # complex
    t: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x_grid, dtype=float)
        psi = np.asarray(self.amplitude, dtype=complex)
        if x.ndim != 1 or psi.shape != x.shape:
            raise DomainError("x_grid and amplitude must be 1D arrays of equal length")
        dx = np.diff(x)
        if np.any(dx <= 0) or np.max(np.abs(dx - dx[0])) > 1e-9 * dx[0]:
            raise DomainError("x_grid must be uniform and increasing")
        object.__setattr__(self, "x_grid", x)
        object.__setattr__(self, "amplitude", psi)
        if abs(self.norm() - 1.0) > 1e-10:
            raise DomainError(f"wavefield norm {self.norm()!r} is not 1 to 1e-10")

    @property
    def dx(self) -> float:
        return float(self.x_grid[1] - self.x_grid[0])

    @property
    def re(self) -> np.ndarray:
        return self.amplitude.real

    @property
    def im(self) -> np.ndarray:
        return self.amplitude.imag

    def density(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitude) ** 2) * (self.x_grid[1] - self.x_grid[0]))

    @classmethod
    def normalized(cls, x_grid, amplitude, t=0.0) -> "Wavefield":
        x = np.asarray(x_grid, dtype=float)
        psi = np.asarray(amplitude, dtype=complex)
        nrm = math.sqrt(np.sum(np.abs(psi) ** 2) * (x[1] - x[0]))
        return cls(x, psi / nrm, t)


def uniform_grid(x_min: float, x_max: float, n: int) -> np.ndarray:
    """n nodes on [x_min, x_max); the periodic image of x_min sits at x_max."""
    return x_min + (x_max - x_min) * np.arange(n) / n


def gaussian_wavefield(gp: GaussianParams, params: PhysicalParams, x_grid, t: float | None = None) -> Wavefield:
    """Discrete Gaussian packet with the same density convention as the analytic ensembles."""
    t = gp.t0 if t is None else t
    return Wavefield.normalized(x_grid, free_gaussian_wavefunction(gp, params, x_grid, t), t)


def _laplacian(n: int, dx: float):
    # 4th-order 5-point second difference, zero amplitude beyond both ends
    c = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * dx * dx)
    return sparse.diags([np.full(n - abs(k), c[k + 2]) for k in range(-2, 3)], range(-2, 3), format="csc")


def hamiltonian_matrix(x_grid, pot: Potential, params: PhysicalParams):
    x = np.asarray(x_grid, dtype=float)
    lap = _laplacian(len(x), float(x[1] - x[0]))
    return (-params.hbar**2 / (2.0 * params.mass)) * lap + sparse.diags(eval_potential(pot, x, params))


def tdse_propagate(w0: Wavefield, pot: Potential, params: PhysicalParams, dt: float, t_final: float,
                   scheme: str = "split-operator", norm_tol: float = 1e-8, snapshots: int = 0):
    """Propagate to ``t_final``.

    split-operator: Strang splitting with FFT kinetic step, periodic box.
    crank-nicolson: Cayley form with the 4th-order Laplacian, hard walls.

    With ``snapshots > 0`` returns a list of that many evenly spaced
    wavefields ending at ``t_final`` instead of the final one alone.
    """
    if scheme not in SCHEMES:
        raise DomainError(f"scheme must be one of {SCHEMES}")
    if not dt > 0:
        raise DomainError("dt must be positive")
    span = t_final - w0.t
    n = int(round(span / dt))
    if n < 0:
        raise DomainError("t_final precedes the wavefield time")
    if n and abs(n * dt - span) > 1e-9 * abs(span):
        dt = span / n
    x = w0.x_grid
    hb, m = params.hbar, params.mass
    psi = w0.amplitude.copy()
    if scheme == "split-operator":
        k = 2.0 * math.pi * np.fft.fftfreq(len(x), w0.dx)
        kin = np.exp(-1j * hb * k * k * dt / (2.0 * m))
        half_v = np.exp(-0.5j * eval_potential(pot, x, params) * dt / hb)

        def step(p):
            return half_v * np.fft.ifft(kin * np.fft.fft(half_v * p))
    else:
        H = hamiltonian_matrix(x, pot, params)
        eye = sparse.identity(len(x), format="csc")
        lhs = splu((eye + 0.5j * dt / hb * H).tocsc())
        rhs = (eye - 0.5j * dt / hb * H).tocsr()

        def step(p):
            return lhs.solve(rhs @ p)

    marks = set()
    if snapshots > 0:
        marks = {int(round(n * (j + 1) / snapshots)) for j in range(snapshots)}
    out = []
    norm0 = w0.norm()
    for i in range(1, n + 1):
        psi = step(psi)
        if i % 256 == 0 or i == n or i in marks:
            drift = abs(np.sum(np.abs(psi) ** 2) * w0.dx - norm0)
            if drift > norm_tol:
                raise StabilityError(f"norm drift {drift:.3e} at step {i} (t={w0.t + i * dt!r})")
        if i in marks:
            out.append(Wavefield(x, psi.copy(), w0.t + i * dt))
    final = Wavefield(x, psi, w0.t + n * dt)
    if snapshots > 0:
        return out if n else [final]
    return final


def energy_expectation(w: Wavefield, pot: Potential, params: PhysicalParams) -> float:
    """<H> with a spectral kinetic term (periodic box)."""
    k = 2.0 * math.pi * np.fft.fftfreq(len(w.x_grid), w.dx)
    phik = np.fft.fft(w.amplitude)
    kin = params.hbar**2 / (2.0 * params.mass) * np.sum(k * k * np.abs(phik) ** 2) / len(k) * w.dx
    pe = np.sum(eval_potential(pot, w.x_grid, params) * w.density()) * w.dx
    return float(kin + pe)


def bohm_velocity(w: Wavefield, params: PhysicalParams, floor: float = 1e-12) -> np.ma.MaskedArray:
    """(hbar/m) Im(psi'/psi) by 4th-order centred differences; weak nodes masked."""
    psi = w.amplitude
    dx = w.dx
    d = np.empty_like(psi)
    d[2:-2] = (psi[:-4] - 8.0 * psi[1:-3] + 8.0 * psi[3:-1] - psi[4:]) / (12.0 * dx)
    d[1] = (psi[2] - psi[0]) / (2.0 * dx)
    d[-2] = (psi[-1] - psi[-3]) / (2.0 * dx)
    d[0] = (-3.0 * psi[0] + 4.0 * psi[1] - psi[2]) / (2.0 * dx)
    d[-1] = (3.0 * psi[-1] - 4.0 * psi[-2] + psi[-3]) / (2.0 * dx)
    mask = np.abs(psi) <= floor
    safe = np.where(mask, 1.0, psi)
    v = params.hbar / params.mass * np.imag(d / safe)
    return np.ma.masked_array(v, mask=mask)


def eckart_transmission(E: float, v0: float, width: float, params: PhysicalParams = PhysicalParams()) -> float:
    """Closed-form transmission through v0 sech^2(x/width)."""
    if not E > 0:
        raise DomainError("energy must be positive")
    m, hb = params.mass, params.hbar
    k = math.sqrt(2.0 * m * E) / hb
    a = math.pi * k * width
    d = 8.0 * m * v0 * width**2 / hb**2 - 1.0
    if d >= 0:
        b = 0.5 * math.pi * math.sqrt(d)
        # ratio cosh(b)/sinh(a) without overflow
        ratio = math.exp(b - a) * (1.0 + math.exp(-2.0 * b)) / (-math.expm1(-2.0 * a))
    else:
        ratio = math.cos(0.5 * math.pi * math.sqrt(-d)) / math.sinh(a) if a < 700 else 0.0
    return 1.0 / (1.0 + ratio * ratio)


def stationary_transmission(E: float, pot: Potential, params: PhysicalParams, x_left: float, x_right: float,
                            n: int = 200_000) -> float:
    """T from a Numerov integration of the stationary equation.

    Starts from a pure outgoing wave exp(ikx) at ``x_right`` and marches left;
    the incident amplitude is read off from two nodes near ``x_left``.
    """
    m, hb = params.mass, params.hbar
    k = math.sqrt(2.0 * m * E) / hb
    x = np.linspace(x_right, x_left, n + 1)
    h = x[1] - x[0]
    f = 2.0 * m * (eval_potential(pot, x, params) - E) / hb**2
    psi = np.empty(n + 1, dtype=complex)
    psi[0] = np.exp(1j * k * x[0])
    psi[1] = np.exp(1j * k * x[1])
    g = 1.0 - h * h * f / 12.0
    for i in range(1, n):
        psi[i + 1] = ((12.0 - 10.0 * g[i]) * psi[i] - g[i - 1] * psi[i - 1]) / g[i + 1]
    # psi = A e^{ikx} + B e^{-ikx} at the last two nodes
    x1, x2 = x[-2], x[-1]
    M = np.array([[np.exp(1j * k * x1), np.exp(-1j * k * x1)], [np.exp(1j * k * x2), np.exp(-1j * k * x2)]])
    A, _ = np.linalg.solve(M, psi[-2:])
    return float(1.0 / abs(A) ** 2)


def packet_transmission(gp: GaussianParams, pot: Eckart, params: PhysicalParams) -> float:
    """Energy-resolved Eckart T averaged over the packet's momentum density.

    Components moving left never reach the barrier and count as reflected.
    """
    hb = params.hbar
    k0 = gp.p0 / hb
    sk = 1.0 / (math.sqrt(2.0) * gp.a)

    def weight(k):
        return math.exp(-0.5 * ((k - k0) / sk) ** 2) / (math.sqrt(2.0 * math.pi) * sk)

    def integrand(k):
        E = (hb * k) ** 2 / (2.0 * params.mass)
        return weight(k) * eckart_transmission(E, pot.v0, pot.width, params)

    hi = k0 + 12.0 * sk
    lo = max(0.0, k0 - 12.0 * sk)
    if hi <= 0:
        return 0.0
    val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(val)


def transmitted_fraction(w: Wavefield, x_split: float) -> float:
    """Probability to the right of ``x_split``."""
    return float(np.sum(w.density()[w.x_grid > x_split]) * w.dx)
