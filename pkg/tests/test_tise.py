import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from qtraj.core import (
    DomainError,
    Eckart,
    Free,
    Harmonic,
    InputError,
    IntegrationError,
    PhysicalParams,
    Polynomial,
    SingularityError,
    grad_potential,
)
from qtraj.oracle import eckart_transmission
from qtraj.tise import (
    PhaseState,
    ScatterOptions,
    TisePath,
    TrajectoryJet,
    energy_from_jet,
    hamilton_rhs,
    hamiltonian_energy,
    integrate_tise,
    jet_to_phase,
    newton_residual_tise,
    phase_to_jet,
    quantum_correction_1d,
    reflection_from_oscillation,
    reflection_from_p,
    scattering_run,
)

EXAMPLE_JET = TrajectoryJet(-2.0, 1.2, 0.1, -0.05)
nonzero = st.one_of(st.floats(0.2, 3.0), st.floats(-3.0, -0.2))
jets = st.builds(TrajectoryJet, st.floats(-3, 3), nonzero, st.floats(-2, 2), st.floats(-2, 2))
states = st.builds(PhaseState, st.floats(-3, 3), st.floats(-3, 3), st.floats(-1, 1), nonzero)


def test_quantum_correction_examples(unit):
    assert quantum_correction_1d(TrajectoryJet(0.0, 2.0), unit) == 0.0
    assert quantum_correction_1d(TrajectoryJet(0.0, 1.0, 1.0, 1.0), unit) == pytest.approx(-0.375)
    assert abs(quantum_correction_1d(TrajectoryJet(0.0, 1.0, 1.0, 1.0), PhysicalParams(1.0, 1e-9))) < 1e-18
    with pytest.raises(SingularityError):
        quantum_correction_1d(TrajectoryJet(0.0, 0.0, 1.0, 1.0), unit)


def test_jet_to_phase_examples(unit):
    z = jet_to_phase(TrajectoryJet(0.3, 2.0), PhysicalParams(1.5, 1.0))
    assert (z.x, z.p, z.r, z.s) == (0.3, 3.0, 0.0, 3.0)
    z = jet_to_phase(TrajectoryJet(0.0, 1.0, 1.0, 0.0), unit)
    assert (z.r, z.s, z.p) == pytest.approx((0.25, 1.0, 0.5))
    with pytest.raises(SingularityError):
        jet_to_phase(TrajectoryJet(0.0, 0.0), unit)


def test_hamiltonian_examples(unit):
    assert hamiltonian_energy(PhaseState(0, 1, 1, 1), Free(), unit) == pytest.approx(-1.5)
    pot = Harmonic(1.3)
    assert hamiltonian_energy(PhaseState(0.7, 0.4, 0.0, 0.4), pot, unit) == pytest.approx(
        0.5 * 0.4**2 + 0.5 * 1.3**2 * 0.7**2)
    with pytest.raises(DomainError):
        hamiltonian_energy(PhaseState(0, math.nan, 0, 1), Free(), unit)


def test_rhs_examples(unit):
    d = hamilton_rhs(PhaseState(0, 0, 1, 1), Free(), unit)
    assert (d.x, d.p, d.r, d.s) == pytest.approx((1.0, 0.0, -9.0, 4.0))
    pot = Eckart(1.0, 1.0, 0.2)
    d = hamilton_rhs(PhaseState(0.9, 1.1, 0.0, 1.1), pot, unit)
    assert (d.x, d.p, d.r, d.s) == pytest.approx((1.1, -grad_potential(pot, 0.9, unit), 0.0, 0.0))


@given(jets)
def test_energy_round_trip(jet):
    pp = PhysicalParams(1.3, 0.7)
    pot = Eckart(0.9, 1.2, 0.1)
    z = jet_to_phase(jet, pp)
    E = energy_from_jet(jet, pot, pp)
    assert hamiltonian_energy(z, pot, pp) == pytest.approx(E, abs=1e-10 * (1 + abs(E)))
    back = phase_to_jet(z, pp)
    for a, b in zip((back.x, back.xdot, back.xddot, back.xdddot), (jet.x, jet.xdot, jet.xddot, jet.xdddot)):
        assert a == pytest.approx(b, abs=1e-9 * (1 + abs(b)))


def test_rhs_is_hamiltonian_gradient(rng):
    pp = PhysicalParams(0.8, 1.3)
    pot = Eckart(1.1, 0.9, -0.3)
    h = 1e-6
    for _ in range(100):
        z = np.array([rng.uniform(-3, 3), rng.uniform(-2, 2), rng.uniform(-1, 1), rng.choice([-1, 1]) * rng.uniform(0.3, 2)])

        def H(w):
            return hamiltonian_energy(PhaseState(*w), pot, pp)

        g = np.zeros(4)
        for i in range(4):
            e = np.zeros(4)
            e[i] = h
            g[i] = (H(z + e) - H(z - e)) / (2 * h)
        d = hamilton_rhs(PhaseState(*z), pot, pp)
        expect = np.array([g[1], -g[0], g[3], -g[2]])
        got = np.array([d.x, d.p, d.r, d.s])
        assert np.max(np.abs(got - expect) / np.maximum(1.0, np.abs(expect))) <= 1e-7


def test_free_classical_motion(unit):
    p = integrate_tise(PhaseState(0.5, 1.3, 0.0, 1.3), Free(), unit, 0.01, 3.0)
    assert np.max(np.abs(p.x - (0.5 + 1.3 * p.t))) <= 1e-12
    assert np.max(np.abs(p.r)) <= 1e-12 and np.max(np.abs(p.s - p.p)) <= 1e-12
    assert p.max_step_residual <= 1e-13


def test_classical_manifold_invariant_without_force(unit):
    pot = Polynomial([0.7])  # constant potential, V' = 0
    p = integrate_tise(PhaseState(-1.0, 0.8, 0.0, 0.8), pot, unit, 0.02, 5.0, "rk4-adaptive", tol=1e-12)
    assert max(np.max(np.abs(p.r)), np.max(np.abs(p.s - p.p))) <= 10 * 1e-12


def test_classical_manifold_left_under_force(unit):
    # r = 0, s = p is not preserved once V' != 0: pdot = -V' while sdot = 0
    p = integrate_tise(PhaseState(0.0, 1.0, 0.0, 1.0), Harmonic(1.0), unit, 1e-3, 1.0)
    assert np.max(np.abs(p.r)) > 1e-3
    assert np.max(np.abs(p.s - p.p)) > 1e-2


# |r| s^4 bounded so the free flow exists over the horizon (sdot = 4 r s^4 blows up otherwise)
tame_states = st.builds(PhaseState, st.floats(-3, 3), st.floats(-3, 3), st.floats(-0.05, 0.05), nonzero)


@given(tame_states)
def test_free_momentum_conserved(z0):
    pp = PhysicalParams()
    p = integrate_tise(z0, Free(), pp, 1e-3, 0.2)
    assert np.max(np.abs(p.p - z0.p)) <= 1e-12 * max(abs(z0.p), 1e-3)


def test_free_nonclassical_momentum_constant_while_s_varies(unit):
    z0 = jet_to_phase(TrajectoryJet(0.0, 1.0, 0.3, -0.2), unit)
    p = integrate_tise(z0, Free(), unit, 1e-3, 2.0)
    assert np.max(np.abs(p.p - z0.p)) <= 1e-12 * abs(z0.p)
    assert np.ptp(p.s) > 0.1


def test_step_residual_and_energy_drift_order(unit):
    pot = Eckart(1.0, 1.0)
    z0 = jet_to_phase(EXAMPLE_JET, unit)
    drifts = []
    for h in (0.02, 0.01, 0.005):
        p = integrate_tise(z0, pot, unit, h, 4.0)
        assert p.max_step_residual <= 1e-13
        drifts.append(p.energy_drift)
    ratios = np.array(drifts[:-1]) / np.array(drifts[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.5))


def test_midpoint_reversibility(unit):
    pot = Eckart(1.0, 1.0)
    z0 = jet_to_phase(EXAMPLE_JET, unit)
    fwd = integrate_tise(z0, pot, unit, 0.01, 3.0)
    back = integrate_tise(fwd.state(-1), pot, unit, -0.01, -3.0)
    assert np.max(np.abs(back.state(-1).as_array() - z0.as_array())) <= 1e-10


def _direct_ode(pot, pp, jet, t_end):
    def rhs(t, y):
        x, v, a, j = y
        f = pp.mass * a + float(grad_potential(pot, x, pp))
        return [v, a, j, v**4 * (-4 * pp.mass * f / pp.hbar**2) + 8 * j * a / v - 10 * a**3 / v**2]

    return solve_ivp(rhs, (0, t_end), [jet.x, jet.xdot, jet.xddot, jet.xdddot], method="DOP853",
                     rtol=1e-13, atol=1e-13, dense_output=True)


@pytest.mark.parametrize("method,step", [("rk4-adaptive", 0.01), ("implicit-midpoint", 2.5e-4)])
def test_hamiltonian_flow_matches_fourth_order_ode(unit, method, step):
    pot = Eckart(0.8, 1.0)
    sol = _direct_ode(pot, unit, EXAMPLE_JET, 4.0)
    p = integrate_tise(jet_to_phase(EXAMPLE_JET, unit), pot, unit, step, 4.0, method, tol=1e-13)
    assert np.max(np.abs(p.x - sol.sol(p.t)[0])) <= 1e-8


def test_position_clock_matches_time_clock(unit):
    pot = Eckart(0.8, 1.0)
    z0 = jet_to_phase(EXAMPLE_JET, unit)
    a = integrate_tise(z0, pot, unit, 0.01, 2.0, "rk4-adaptive", clock="position", tol=1e-13)
    sol = _direct_ode(pot, unit, EXAMPLE_JET, a.t[-1])
    assert a.x[-1] == pytest.approx(2.0, abs=1e-12)
    assert np.max(np.abs(a.x - sol.sol(a.t)[0])) <= 1e-8


def test_integration_failure_reports_context(unit):
    with pytest.raises(IntegrationError, match=r"step 50\.0.*t="):
        integrate_tise(jet_to_phase(EXAMPLE_JET, unit), Harmonic(3.0), unit, 50.0, 250.0)
    with pytest.raises(DomainError):
        integrate_tise(PhaseState(0, 1, 0, 1), Free(), unit, 0.1, 1.0, method="euler")


def test_newton_residual_plane_wave(unit):
    t = np.linspace(0, 2, 41)
    z = np.zeros_like(t)
    path = TisePath(t, 0.3 + 1.7 * t, z, z, z, unit)
    mx, rms, _ = newton_residual_tise(path, Free())
    # zero up to rounding in the fourth-difference stencil
    h = t[1] - t[0]
    bound = 1e3 * np.finfo(float).eps * np.max(np.abs(path.x)) / h**4 * 0.25 / 1.7**4
    assert mx <= bound and rms <= mx


def test_newton_residual_converges_on_eckart_path(unit):
    pot = Eckart(0.8, 1.0)
    path = integrate_tise(jet_to_phase(EXAMPLE_JET, unit), pot, unit, 0.01, 4.0, "rk4-adaptive", tol=1e-14)
    interp = path.interpolant(pot)
    res = []
    for h in (0.16, 0.08, 0.04):
        t = np.arange(0.0, 4.0 + 1e-12, h)
        z = np.zeros_like(t)
        res.append(newton_residual_tise(TisePath(t, interp(t), z, z, z, unit), pot)[0])
    ratios = np.array(res[:-1]) / np.array(res[1:])
    # 7-point stencils: the fourth derivative is the 4th-order bottleneck
    assert np.all(ratios > 10)


def test_newton_residual_input_checks(unit):
    z = np.zeros(6)
    with pytest.raises(InputError):
        newton_residual_tise(TisePath(np.arange(6.0), np.arange(6.0), z, z, z, unit), Free())
    t = np.array([0, 1, 2, 3, 4, 5, 7.0, 8.0])
    z = np.zeros(8)
    with pytest.raises(InputError):
        newton_residual_tise(TisePath(t, t, z, z, z, unit), Free())


def test_two_plane_wave_momentum_oracle():
    sp = pytest.importorskip("sympy")
    x, k, m, hb = sp.symbols("x k m hbar", positive=True)
    b = sp.Rational(1, 2)
    rho = 1 + b**2 + 2 * b * sp.cos(2 * k * x)
    v = hb * k * (1 - b**2) / (m * rho)  # stationary flux over density
    # time derivatives along the trajectory: d/dt = v d/dx
    a = sp.diff(v, x) * v
    j = sp.diff(a, x) * v
    p = m * v + hb**2 / (4 * m) * (j / v**4 - 2 * a**2 / v**5)
    ratio = sp.simplify(p / (hb * k))
    assert sp.simplify(ratio - sp.Rational(5, 3)) == 0
    R, T = reflection_from_p(5.0 / 3.0, 1.0, PhysicalParams())
    assert R == pytest.approx(0.25, abs=1e-15) and T == pytest.approx(0.75, abs=1e-15)
    vmax = float((1 - b**2) / (1 - b) ** 2)
    vmin = float((1 - b**2) / (1 + b) ** 2)
    assert reflection_from_oscillation(vmax, vmin) == pytest.approx(0.25, abs=1e-15)


def test_scatter_free_is_transparent(unit):
    res = scattering_run(Free(), unit, 1.3)
    assert res.p_asymptotic == pytest.approx(1.3, abs=1e-14)
    assert res.reflection == pytest.approx(0.0, abs=1e-14) and res.transmission == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("E", [0.3, 1.5])
def test_scatter_eckart_matches_closed_form(unit, E):
    pot = Eckart(1.0, 1.0)
    k = math.sqrt(2 * E)
    res = scattering_run(pot, unit, k, ScatterOptions(step=0.1, tol=1e-10))
    T = eckart_transmission(E, 1.0, 1.0, unit)
    assert abs(res.transmission - T) / T <= 1e-8
    assert abs(res.reflection + res.transmission - 1.0) <= 1e-12
    assert 0.0 <= res.transmission <= 1.0
    assert abs(res.reflection_oscillation - res.reflection) <= 1e-6
    assert res.p_variation <= 1e-12


def test_scatter_preconditions(unit):
    with pytest.raises(DomainError):
        scattering_run(Eckart(1.0, 1.0), unit, 0.0)
    with pytest.raises(DomainError):
        scattering_run(Harmonic(1.0), unit, 1.0)
    with pytest.raises(IntegrationError, match="variation"):
        scattering_run(Eckart(1.0, 1.0), unit, 1.0, ScatterOptions(flatten_tol=0.0, max_span=40.0))
