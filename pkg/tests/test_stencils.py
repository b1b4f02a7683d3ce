import numpy as np
import pytest
from hypothesis import given, strategies as st

from qtraj.core import erfinv
from qtraj.stencils import fornberg_weights, quantile_chain, stencil_set


def test_fornberg_classic_weights():
    assert np.allclose(fornberg_weights(0.0, [-1, 0, 1], 2), [1, -2, 1])
    assert np.allclose(fornberg_weights(0.0, [-2, -1, 0, 1, 2], 1), np.array([1, -8, 0, 8, -1]) / 12)
    assert np.allclose(fornberg_weights(0.0, [-2, -1, 0, 1, 2], 4), [1, -4, 6, -4, 1])


@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5))
def test_uniform_exact_on_quartics(coef):
    s = stencil_set(41, 0.05)
    c = s.c_grid
    f = np.polynomial.polynomial.polyval(c, coef)
    d = s.apply(f)
    for k in range(1, 5):
        ref = np.polynomial.polynomial.polyval(c, np.polynomial.polynomial.polyder(coef, k))
        assert np.allclose(d[k - 1], ref, atol=1e-6 * (1 + np.max(np.abs(coef))))


def test_linear_and_quartic_examples():
    s = stencil_set(31, 0.02)
    c = s.c_grid
    d = s.apply(2.0 - 3.0 * c)
    assert np.allclose(d[0], -3.0, atol=1e-11)
    assert np.allclose(d[1:], 0.0, atol=1e-7)
    d4 = s.apply(c**4, 4)
    assert np.allclose(d4[2:-2], 24.0, atol=1e-6)


def test_quantile_chain_against_differences():
    C = np.linspace(0.1, 0.9, 9)
    y = lambda c: erfinv(2 * c - 1)
    y1, y2, y3, y4 = quantile_chain(y(C))
    h = 1e-5
    assert np.allclose(y1, (y(C + h) - y(C - h)) / (2 * h), rtol=1e-7)
    h = 1e-4
    assert np.allclose(y2, (y(C + h) - 2 * y(C) + y(C - h)) / h**2, rtol=1e-5, atol=1e-5)
    h = 1e-3
    d3 = (y(C + 2 * h) - 2 * y(C + h) + 2 * y(C - h) - y(C - 2 * h)) / (2 * h**3)
    assert np.allclose(y3, d3, rtol=1e-3)
    h = 2e-3
    d4 = (y(C + 2 * h) - 4 * y(C + h) + 6 * y(C) - 4 * y(C - h) + y(C - 2 * h)) / h**4
    assert np.allclose(y4, d4, rtol=1e-3, atol=1e-3 * np.max(np.abs(y4)))


def test_quantile_exact_on_gaussian_profile():
    s = stencil_set(101, 0.02, "quantile")
    y = erfinv(2 * s.c_grid - 1)
    d = s.apply(0.3 + 1.7 * y)
    ref = [1.7 * q for q in quantile_chain(y)]
    for k in range(4):
        assert np.max(np.abs(d[k] - ref[k])) <= 1e-11 * np.max(np.abs(ref[k]))


@pytest.mark.parametrize("k,order", [(1, 4), (2, 4), (3, 2), (4, 2)])
def test_interior_order_uniform(k, order):
    errs = []
    for n in (81, 161, 321):
        s = stencil_set(n, 0.0 + 1e-9)
        c = s.c_grid
        d = s.apply(np.sin(3 * c), k)
        ref = 3**k * np.sin(3 * c + k * np.pi / 2)
        errs.append(np.max(np.abs(d - ref)[4:-4]))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > order - 0.3)


def test_matrix_matches_apply():
    s = stencil_set(15, 0.1, "quantile")
    f = np.cos(s.c_grid)
    for k in range(1, 5):
        assert np.allclose(s.matrix(k) @ f, s.apply(f, k))
