"""Finite-difference weights for the uniform C grid.

Two stencil coordinates are supported:

``uniform``
    Classic Fornberg weights in C.  Exact on polynomials in C of degree
    below the stencil width.

``quantile``
    Interpolate in the Gaussian quantile coordinate y = erfinv(2C - 1) on the
    same nodes, then map the y-derivatives back to C derivatives by the chain
    rule using the closed-form derivatives of y(C).  Exact on polynomials in
    y, which makes it exact for Gaussian ensembles and far better conditioned
    near the truncated ends, where x(C) steepens like erfinv.

Stencils are ``width`` points wide, centred where possible and shifted to be
one-sided next to the ends.  With the default width 5 the centred orders are
4, 4, 2, 2 for the first to fourth derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import erfinv

COORDINATES = ("uniform", "quantile")


def fornberg_weights(x0: float, nodes, order: int) -> np.ndarray:
    """Weights w with sum(w * f(nodes)) ~ f^(order)(x0) (Fornberg 1988)."""
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    c = np.zeros((order + 1, n))
    c1 = 1.0
    c4 = nodes[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c[order]


def quantile_chain(y):
    """First four C-derivatives of y(C) = erfinv(2C - 1), as functions of y."""
    y1 = math.sqrt(math.pi) * np.exp(y * y)
    y2 = 2.0 * y * y1**2
    y3 = y1**3 * (2.0 + 8.0 * y * y)
    y4 = 3.0 * y1**2 * y2 * (2.0 + 8.0 * y * y) + 16.0 * y * y1**4
    return y1, y2, y3, y4


@dataclass(frozen=True)
class StencilSet:
    """Banded derivative operators d/dC .. d^4/dC^4 on a fixed grid.

    ``weights[k]`` has shape (n, width); row i acts on ``f[index[i]]``.
    """

    c_grid: np.ndarray
    coordinate: str
    width: int
    weights: np.ndarray
    index: np.ndarray

    def apply(self, f, order: int | None = None, axis: int = -1):
        """Derivatives of ``f`` along ``axis``; all four stacked first if ``order`` is None."""
        f = np.moveaxis(np.asarray(f, dtype=float), axis, -1)
        g = f[..., self.index]
        if order is None:
            out = np.einsum("kij,...ij->k...i", self.weights, g)
            return np.moveaxis(out, -1, axis if axis < 0 else axis + 1)
        out = np.einsum("ij,...ij->...i", self.weights[order - 1], g)
        return np.moveaxis(out, -1, axis)

    def matrix(self, order: int) -> np.ndarray:
        n = len(self.c_grid)
        m = np.zeros((n, n))
        rows = np.repeat(np.arange(n), self.width)
        np.add.at(m, (rows, self.index.ravel()), self.weights[order - 1].ravel())
        return m


def _window_starts(n: int, width: int) -> np.ndarray:
    half = width // 2
    return np.clip(np.arange(n) - half, 0, n - width)


@lru_cache(maxsize=64)
def _build(n: int, lo: float, hi: float, coordinate: str, width: int) -> StencilSet:
    if coordinate not in COORDINATES:
        raise ValueError(f"unknown stencil coordinate {coordinate!r}; expected one of {COORDINATES}")
    if n < max(width, 7):
        raise ValueError(f"need at least {max(width, 7)} grid points, got {n}")
    c = np.linspace(lo, hi, n)
    starts = _window_starts(n, width)
    index = starts[:, None] + np.arange(width)[None, :]
    w = np.zeros((4, n, width))
    if coordinate == "uniform":
        h = c[1] - c[0]
        local = np.arange(width, dtype=float)
        for i in range(n):
            for k in range(4):
                w[k, i] = fornberg_weights(i - starts[i], local, k + 1) / h ** (k + 1)
    else:
        if not (0.0 < lo and hi < 1.0):
            raise ValueError("quantile stencils need a grid strictly inside (0, 1)")
        y = erfinv(2.0 * c - 1.0)
        y1, y2, y3, y4 = quantile_chain(y)
        for i in range(n):
            nodes = y[index[i]]
            f1, f2, f3, f4 = (fornberg_weights(y[i], nodes, k) for k in (1, 2, 3, 4))
            # Faa di Bruno for d^k/dC^k of F(y(C))
            w[0, i] = f1 * y1[i]
            w[1, i] = f2 * y1[i] ** 2 + f1 * y2[i]
            w[2, i] = f3 * y1[i] ** 3 + 3.0 * f2 * y1[i] * y2[i] + f1 * y3[i]
            w[3, i] = (f4 * y1[i] ** 4 + 6.0 * f3 * y1[i] ** 2 * y2[i]
                       + f2 * (3.0 * y2[i] ** 2 + 4.0 * y1[i] * y3[i]) + f1 * y4[i])
    w.flags.writeable = False
    index.flags.writeable = False
    c.flags.writeable = False
    return StencilSet(c, coordinate, width, w, index)


def stencil_set(n: int, epsilon: float, coordinate: str = "uniform", width: int = 5) -> StencilSet:
    """Cached stencils for the grid linspace(epsilon, 1 - epsilon, n)."""
    return _build(int(n), float(epsilon), float(1.0 - epsilon), coordinate, int(width))


def stencil_set_for(c_grid, coordinate: str = "uniform", width: int = 5) -> StencilSet:
    """Cached stencils for an arbitrary uniform grid given by its nodes."""
    c_grid = np.asarray(c_grid, dtype=float)
    return _build(len(c_grid), float(c_grid[0]), float(c_grid[-1]), coordinate, int(width))
