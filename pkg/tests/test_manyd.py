import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qtraj.analytic import GaussianParams, free_gaussian_x, ho_gaussian_x
from qtraj.conservation import energy_density, total
from qtraj.core import CrossingError, DomainError, Free, Harmonic, InputError, PhysicalParams
from qtraj.ensemble1d import c_derivatives, c_grid, free_gaussian_ensemble, q_density_1d, quantum_force_1d
from qtraj.manyd import (EnsembleManyD, Potential2D, _k_derivs_chain, cfl_timestep_manyd, curl, density_manyd,
                         jacobi_field, product_gaussian_ensemble, q_density_manyd, quantum_force_manyd, run_manyd,
                         step_manyd, total_energy_manyd)

PP = PhysicalParams()
G1 = GaussianParams(p0=0.5, a=1.0)
G2 = GaussianParams(x0=1.0, p0=-0.3, a=1.5)


def rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def affine(A, b=(0.0, 0.0), v=(0.0, 0.0), n=(9, 11), eps=0.1):
    c1, c2 = c_grid(n[0], eps), c_grid(n[1], eps)
    C = np.stack(np.meshgrid(c1, c2, indexing="ij"))
    x = np.einsum("ij,j...->i...", np.asarray(A), C) + np.asarray(b)[:, None, None]
    vv = np.broadcast_to(np.asarray(v, dtype=float)[:, None, None], x.shape).copy()
    return EnsembleManyD(0.0, eps, (c1, c2), x, vv)


def test_validation():
    c = c_grid(9, 0.1)
    with pytest.raises(InputError):
        EnsembleManyD(0.0, 0.1, (c, c), np.zeros((2, 9, 8)), np.zeros((2, 9, 8)))
    with pytest.raises(InputError):
        EnsembleManyD(0.0, 0.1, (c[:5], c[:5]), np.zeros((2, 5, 5)), np.zeros((2, 5, 5)))
    with pytest.raises(DomainError):
        EnsembleManyD(0.0, 0.1, (c, c), np.zeros((2, 9, 9)), np.zeros((2, 9, 9)), n=3)
    e = affine(np.eye(2), n=(9, 9))
    assert e.coordinate == ("uniform", "uniform")


@given(a=st.floats(0.2, 5.0), b=st.floats(0.2, 5.0), theta=st.floats(-3.0, 3.0))
def test_affine_jacobi_and_zero_force(a, b, theta):
    A = rot(theta) @ np.diag([a, b])
    e = affine(A)
    jf = jacobi_field(e)
    assert np.allclose(jf.J, A[:, :, None, None], atol=1e-11 * max(a, b))
    assert np.allclose(jf.detJ, a * b, rtol=1e-11)
    assert jf.identity_error() <= 1e-12
    assert np.max(np.abs(quantum_force_manyd(jf, PP))) <= 1e-7 * max(a, b)
    assert np.allclose(density_manyd(e), 1.0 / (a * b), rtol=1e-11)


def test_product_jacobi_is_diagonal():
    e = product_gaussian_ensemble((G1, G2), PP, 31, 0.02, 0.4)
    jf = jacobi_field(e)
    d1 = c_derivatives(free_gaussian_ensemble(G1, PP, 31, 0.02, 0.4)).d1
    d2 = c_derivatives(free_gaussian_ensemble(G2, PP, 31, 0.02, 0.4)).d1
    assert np.allclose(jf.J[0, 0], d1[:, None], rtol=1e-12)
    assert np.allclose(jf.J[1, 1], d2[None, :], rtol=1e-12)
    assert np.max(np.abs(jf.J[0, 1])) <= 1e-12 and np.max(np.abs(jf.J[1, 0])) <= 1e-12
    assert jf.identity_error() <= 1e-12


def test_product_force_and_q_reduce_to_1d():
    e = product_gaussian_ensemble((G1, G2), PP, 41, 0.02, 0.4)
    jf = jacobi_field(e)
    e1, e2 = (free_gaussian_ensemble(g, PP, 41, 0.02, 0.4) for g in (G1, G2))
    F = quantum_force_manyd(jf, PP)
    assert np.max(np.abs(F[0] - quantum_force_1d(c_derivatives(e1), PP)[:, None])) <= 1e-9
    assert np.max(np.abs(F[1] - quantum_force_1d(c_derivatives(e2), PP)[None, :])) <= 1e-9
    q = q_density_manyd(jf, PP)
    q1, q2 = q_density_1d(c_derivatives(e1), PP), q_density_1d(c_derivatives(e2), PP)
    assert np.max(np.abs(q - q1[:, None] - q2[None, :])) <= 1e-10


@given(theta=st.floats(-math.pi, math.pi))
def test_rotated_product_force_is_covariant(theta):
    base = quantum_force_manyd(jacobi_field(product_gaussian_ensemble((G1, G2), PP, 21, 0.05, 0.4)), PP)
    e = product_gaussian_ensemble((G1, G2), PP, 21, 0.05, 0.4, rotation=theta)
    F = quantum_force_manyd(jacobi_field(e), PP)
    assert np.max(np.abs(F - np.einsum("ij,j...->i...", rot(theta), base))) <= 1e-9
    assert np.max(np.abs(curl(e))) <= 1e-12


def test_shear_oracle():
    # x = (C1 + alpha C2^2, C2): unit density, K linear in C2, no quantum force
    alpha = 0.7
    c1, c2 = c_grid(11, 0.1), c_grid(13, 0.1)
    C1, C2 = np.meshgrid(c1, c2, indexing="ij")
    x = np.stack([C1 + alpha * C2**2, C2])
    e = EnsembleManyD(0.0, 0.1, (c1, c2), x, np.zeros_like(x))
    jf = jacobi_field(e)
    assert np.allclose(jf.J[0, 1], 2 * alpha * C2, atol=1e-12)
    assert np.allclose(jf.K[0, 1], -2 * alpha * C2, atol=1e-12)
    assert np.allclose(jf.detJ, 1.0, atol=1e-12)
    dK, d2K, d3K = _k_derivs_chain(jf)
    assert np.allclose(dK[1][0, 1], -2 * alpha, atol=1e-10)
    assert np.max(np.abs(dK[0])) <= 1e-10
    assert max(np.max(np.abs(v)) for v in d2K.values()) <= 1e-8
    assert np.max(np.abs(quantum_force_manyd(jf, PP))) <= 1e-7


def test_chain_rule_derivative_of_inverse():
    # dK = -K dJ K checked against differencing K itself on a smooth non-affine map
    n = 201
    c = c_grid(n, 0.1)
    C1, C2 = np.meshgrid(c, c, indexing="ij")
    x = np.stack([C1 + 0.2 * np.sin(C2), C2 + 0.1 * C1**3])
    e = EnsembleManyD(0.0, 0.1, (c, c), x, np.zeros_like(x))
    jf = jacobi_field(e)
    dK, _, _ = _k_derivs_chain(jf)
    st1, st2 = jf.stencils
    fd = [st1.apply(jf.K, 1, axis=-2), st2.apply(jf.K, 1, axis=-1)]
    inner = (slice(None), slice(None), slice(5, -5), slice(5, -5))
    for a in (0, 1):
        assert np.max(np.abs(dK[a] - fd[a])[inner]) <= 1e-6


def test_nested_force_agrees_in_the_interior():
    e = product_gaussian_ensemble((G1, G2), PP, 41, 0.02, 0.4)
    jf = jacobi_field(e)
    diff = quantum_force_manyd(jf, PP, "nested") - quantum_force_manyd(jf, PP)
    assert np.max(np.abs(diff[:, 10:-10, 10:-10])) <= 1e-4
    with pytest.raises(DomainError):
        quantum_force_manyd(jf, PP, "bogus")


def test_plane_wave_translates():
    e = affine(np.diag([2.0, 3.0]), v=(0.4, -0.2))
    out = run_manyd(e, 1.0, None, PP)[-1]
    assert np.allclose(out.x[0], e.x[0] + 0.4, atol=1e-9)
    assert np.allclose(out.x[1], e.x[1] - 0.2, atol=1e-9)
    assert out.t == pytest.approx(1.0)


def test_product_gaussian_follows_analytic_flow():
    e = product_gaussian_ensemble((G1, G2), PP, 41, 0.02, 0.0)
    out = run_manyd(e, 0.5, Potential2D((Free(), Free())), PP)[-1]
    C1, C2 = out.mesh()
    inner = (slice(8, -8), slice(8, -8))
    assert np.max(np.abs(out.x[0] - free_gaussian_x(G1, PP, C1, 0.5))[inner]) <= 1e-5
    assert np.max(np.abs(out.x[1] - free_gaussian_x(G2, PP, C2, 0.5))[inner]) <= 1e-5


def test_coherent_ground_state_is_stationary():
    w = 1.0
    gp = GaussianParams(a=math.sqrt(PP.hbar / (PP.mass * w)))
    e = product_gaussian_ensemble((gp, gp), PP, 31, 0.05, 0.0)
    pot = Potential2D((Harmonic(w), Harmonic(w)))
    out = run_manyd(e, 0.5, pot, PP)[-1]
    C1, _ = out.mesh()
    assert np.max(np.abs(out.x - e.x)) <= 1e-6
    assert np.allclose(out.x[0], ho_gaussian_x(gp, PP, w, C1, 0.5), atol=1e-6)


def test_total_energy_of_product_is_additive():
    e = product_gaussian_ensemble((G1, G2), PP, 41, 0.02, 0.0)
    parts = [total(s, energy_density(s, Free(), PP)) for s in
             (free_gaussian_ensemble(g, PP, 41, 0.02, 0.0) for g in (G1, G2))]
    w = 1 - 2 * 0.02
    assert total_energy_manyd(e, None, PP) == pytest.approx(w * (parts[0] + parts[1]), rel=1e-9)


def test_fold_reports_node():
    e = affine(np.eye(2), n=(9, 9))
    x = e.x.copy()
    x[0, 4:, :] = x[0, 4:, :][::-1]  # mirror part of axis 1 so dx1/dC1 changes sign
    bad = EnsembleManyD(0.0, e.epsilon, e.c_axes, x, e.v)
    with pytest.raises(CrossingError) as info:
        jacobi_field(bad)
    assert "node" in str(info.value)


def test_step_and_cfl():
    e = product_gaussian_ensemble((G1, G2), PP, 21, 0.05, 0.0)
    dt = cfl_timestep_manyd(e, PP)
    assert dt > 0
    with pytest.raises(DomainError):
        step_manyd(e, -dt, None, PP)
    assert step_manyd(e, dt, None, PP).t == pytest.approx(dt)
