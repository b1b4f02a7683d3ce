"""Physical parameters, potential models and the inverse error function."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numpy.typing import ArrayLike
from scipy import special


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class InputError(ValueError):
    """Malformed or inconsistent input data (grids, paths, slices)."""


class SingularityError(ArithmeticError):
    """A formula would divide by a vanishing velocity or slope."""


class CrossingError(SingularityError):
    """Trajectories touched or crossed: dx/dC <= 0 at some grid node."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class BlowupError(ArithmeticError):
    """Non-finite values appeared during time stepping."""


class IntegrationError(RuntimeError):
    """An integrator failed to converge or ran out of budget."""


@dataclass(frozen=True)
class PhysicalParams:
    mass: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("mass", "hbar"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise DomainError(f"{name} must be positive and finite, got {val!r}")


@dataclass(frozen=True)
class Free:
    tag = "free"


@dataclass(frozen=True)
class Harmonic:
    """V = m w^2 x^2 / 2; the mass comes from PhysicalParams at evaluation time."""

    omega: float
    tag = "harmonic"

    def __post_init__(self):
        if not (math.isfinite(self.omega) and self.omega > 0):
            raise DomainError(f"omega must be positive, got {self.omega!r}")


@dataclass(frozen=True)
class Eckart:
    """Symmetric barrier V = v0 sech^2((x - center) / width)."""

    v0: float
    width: float
    center: float = 0.0
    tag = "eckart"

    def __post_init__(self):
        if not (math.isfinite(self.v0) and self.v0 > 0):
            raise DomainError(f"v0 must be positive, got {self.v0!r}")
        if not (math.isfinite(self.width) and self.width > 0):
            raise DomainError(f"width must be positive, got {self.width!r}")
        if not math.isfinite(self.center):
            raise DomainError("center must be finite")


@dataclass(frozen=True)
class Polynomial:
    """V = sum_k coefficients[k] x^k (ascending powers)."""

    coefficients: tuple = field(default_factory=tuple)
    tag = "polynomial"

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if not all(math.isfinite(c) for c in coeffs):
            raise DomainError("polynomial coefficients must be finite")
        object.__setattr__(self, "coefficients", coeffs)


Potential = Union[Free, Harmonic, Eckart, Polynomial]

POTENTIALS = {cls.tag: cls for cls in (Free, Harmonic, Eckart, Polynomial)}


def potential_from_dict(d: dict) -> Potential:
    """Build a potential from ``{"kind": tag, **fields}``."""
    d = dict(d)
    kind = d.pop("kind", "free")
    try:
        cls = POTENTIALS[kind]
    except KeyError:
        raise DomainError(f"unknown potential kind {kind!r}; expected one of {sorted(POTENTIALS)}")
    if cls is Polynomial and "coefficients" in d:
        d["coefficients"] = tuple(d["coefficients"])
    return cls(**d)


def potential_to_dict(pot: Potential) -> dict:
    out = {"kind": pot.tag}
    if isinstance(pot, Harmonic):
        out["omega"] = pot.omega
    elif isinstance(pot, Eckart):
        out.update(v0=pot.v0, width=pot.width, center=pot.center)
    elif isinstance(pot, Polynomial):
        out["coefficients"] = list(pot.coefficients)
    return out


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise DomainError("potential evaluated at non-finite position")


def _sech2(z):
    # 1/cosh^2 without overflow for large |z|
    e = np.exp(-2.0 * np.abs(z))
    return 4.0 * e / (1.0 + e) ** 2


def eval_potential(pot: Potential, x: ArrayLike, params: PhysicalParams | None = None):
    """V(x). Works elementwise on arrays; ``params`` only matters for Harmonic."""
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    if isinstance(pot, Free):
        val = np.zeros_like(x)
    elif isinstance(pot, Harmonic):
        m = params.mass if params is not None else 1.0
        val = 0.5 * m * pot.omega**2 * x**2
    elif isinstance(pot, Eckart):
        val = pot.v0 * _sech2((x - pot.center) / pot.width)
    elif isinstance(pot, Polynomial):
        val = np.polynomial.polynomial.polyval(x, pot.coefficients) if pot.coefficients else np.zeros_like(x)
    else:
        raise TypeError(f"not a potential: {pot!r}")
    return val[()] if val.ndim == 0 else val


def grad_potential(pot: Potential, x: ArrayLike, params: PhysicalParams | None = None):
    """Analytic dV/dx."""
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    if isinstance(pot, Free):
        val = np.zeros_like(x)
    elif isinstance(pot, Harmonic):
        m = params.mass if params is not None else 1.0
        val = m * pot.omega**2 * x
    elif isinstance(pot, Eckart):
        z = (x - pot.center) / pot.width
        val = -2.0 * pot.v0 * _sech2(z) * np.tanh(z) / pot.width
    elif isinstance(pot, Polynomial):
        c = pot.coefficients
        if len(c) > 1:
            val = np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(c))
        else:
            val = np.zeros_like(x)
    else:
        raise TypeError(f"not a potential: {pot!r}")
    return val[()] if val.ndim == 0 else val


def erfinv(u: ArrayLike):
    """Inverse error function on (-1, 1); raises DomainError outside it."""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)) or np.any(np.abs(u) >= 1.0):
        raise DomainError("erfinv requires |u| < 1")
    y = special.erfinv(u)
    return y[()] if y.ndim == 0 else y


def curvature_potential(pot: Potential, x: ArrayLike, params: PhysicalParams | None = None):
    """Analytic d^2V/dx^2 (used by Newton solves)."""
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    if isinstance(pot, Free):
        val = np.zeros_like(x)
    elif isinstance(pot, Harmonic):
        m = params.mass if params is not None else 1.0
        val = np.full_like(x, m * pot.omega**2)
    elif isinstance(pot, Eckart):
        z = (x - pot.center) / pot.width
        sech2 = _sech2(z)
        val = 2.0 * pot.v0 * sech2 * (2.0 - 3.0 * sech2) / pot.width**2
    elif isinstance(pot, Polynomial):
        c = pot.coefficients
        if len(c) > 2:
            val = np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(c, 2))
        else:
            val = np.zeros_like(x)
    else:
        raise TypeError(f"not a potential: {pot!r}")
    return val[()] if val.ndim == 0 else val
