import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qedlab import (
    AtomParams,
    BlochVector,
    DriveField,
    build_bloch_generator,
    propagate_exact,
    propagate_rk,
    rotate_z,
    steady_state,
    trajectory,
)
from qedlab.dynamics import default_rk_step, expm_stack, generator_eigenvalues
from qedlab.errors import DegenerateSystemError, GridError, ParameterError
from qedlab.units import TWO_PI, ns

from conftest import mhz

# DOP853 (rtol 1e-13) integration of the Bloch equations from the ground state,
# measured device rates, 140 MHz drive; generated by tools/oracles.py.
ODE_ORACLE = {
    (0.0, 0.5): (0.0, 0.4199475157777883, -0.9075040600249489),
    (0.0, 1.824): (0.0, 0.9771042215126761, -0.06355582105052628),
    (0.0, 5.0): (0.0, -0.45458998537661743, 0.25226964355568704),
    (0.0, 20.0): (0.0, -0.04581386856921982, -0.04504414724745211),
    (0.7, 0.5): (0.27053761737558046, 0.32119357651217084, -0.9075040600249488),
    (0.7, 1.824): (0.6294678217730795, 0.747330529986661, -0.06355582105052429),
    (0.7, 5.0): (-0.2928549090207395, -0.3476895987330748, 0.2522696435556845),
    (0.7, 20.0): (-0.029514104453072565, -0.03504037944444427, -0.045044147247453925),
}
# sympy closed-form steady state at phase 0.7, measured device rates, 140 MHz
STEADY_ORACLE_PHI07 = (0.08349901144525439, 0.09913351932903042, -0.0084248474567868)

rates = st.floats(min_value=0.1, max_value=50.0)
rabis = st.floats(min_value=0.0, max_value=600.0)
phases = st.floats(min_value=-10.0, max_value=10.0)


def atom_from(g1_mhz, extra_mhz):
    return AtomParams.measured(gamma1_mhz=g1_mhz, gamma2_mhz=g1_mhz / 2 + extra_mhz)


@st.composite
def unit_ball(draw):
    v = np.array([draw(st.floats(-1, 1)) for _ in range(3)])
    n = np.linalg.norm(v)
    return BlochVector.from_array(v / n) if n > 1 else BlochVector.from_array(v)


# --- parameter types -------------------------------------------------------

def test_measured_atom_values(atom):
    assert atom.omega_a == pytest.approx(TWO_PI * 9.888e9)
    assert atom.gamma1 == pytest.approx(mhz(18.3))
    assert atom.phi_p == pytest.approx(13.6e-12 * 213e-9, rel=1e-12)


def test_atom_rejects_bad_rates():
    with pytest.raises(ParameterError):
        AtomParams.measured(gamma1_mhz=20.0, gamma2_mhz=5.0)
    with pytest.raises(ParameterError):
        AtomParams.measured(gamma1_mhz=-1.0)
    with pytest.raises(ParameterError):
        AtomParams(omega_a=0.0, gamma1=1.0, gamma2=1.0, phi_p=1e-18)


def test_atom_rejects_inconsistent_flux():
    with pytest.raises(ParameterError):
        AtomParams(omega_a=1e10, gamma1=1e7, gamma2=1e7, phi_p=1e-18,
                   persistent_current=213e-9, mutual_inductance=13.6e-12)


def test_measured_rates_sit_inside_dephasing_slack(atom):
    # measured G2 is 0.5% below G1/2; accepted, with negative pure dephasing
    assert atom.pure_dephasing < 0


def test_drive_phase_wrapped():
    assert DriveField(1.0, -math.pi / 2).phase == pytest.approx(3 * math.pi / 2)
    assert DriveField(1.0, 5 * math.pi).phase == pytest.approx(math.pi)
    with pytest.raises(ParameterError):
        DriveField(-1.0)


def test_bloch_norm_limit():
    BlochVector(0.0, 0.0, 1.0 + 5e-10)
    with pytest.raises(ParameterError):
        BlochVector(0.0, 0.0, 1.0 + 1e-8)
    with pytest.raises(ParameterError):
        BlochVector(math.nan, 0.0, 0.0)


# --- generator -------------------------------------------------------------

def test_generator_undriven(atom):
    B, b = build_bloch_generator(atom, DriveField.off())
    np.testing.assert_array_equal(B, np.diag([-atom.gamma2, -atom.gamma2, -atom.gamma1]))
    np.testing.assert_array_equal(b, [0.0, 0.0, -atom.gamma1])


def test_generator_phase_zero_rows(atom):
    W = mhz(140)
    B, _ = build_bloch_generator(atom, DriveField(W, 0.0))
    np.testing.assert_allclose(B[1], [0.0, -atom.gamma2, -W])
    np.testing.assert_allclose(B[2], [0.0, W, -atom.gamma1])
    assert B[0, 2] == pytest.approx(0.0, abs=1e-6)


def test_generator_quarter_phase_is_rotated(atom):
    W = mhz(140)
    B0, _ = build_bloch_generator(atom, DriveField(W, 0.0))
    B90, _ = build_bloch_generator(atom, DriveField(W, math.pi / 2))
    np.testing.assert_allclose(B90[0], [-atom.gamma2, 0.0, -W], atol=1e-6 * W)
    np.testing.assert_allclose(B90[2], [W, 0.0, -atom.gamma1], atol=1e-6 * W)
    # x <-> y swap with the sign that keeps the rotation proper
    P = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    np.testing.assert_allclose(P @ B0 @ P.T, B90, atol=1e-6 * W)


# --- steady state ----------------------------------------------------------

def test_steady_state_undriven(atom):
    s = steady_state(atom, DriveField.off())
    assert tuple(s) == pytest.approx((0.0, 0.0, -1.0))


def test_steady_state_level_highest_at_weakest_drive(atom):
    levels = {}
    for f in (140.0, 44.0, 14.0):
        W = mhz(f)
        s = steady_state(atom, DriveField(W))
        expected = (atom.gamma1 * W / 2) / (atom.gamma1 * atom.gamma2 + W ** 2)
        assert s.sy / 2 == pytest.approx(expected, rel=1e-12)
        levels[f] = s.sy / 2
    assert levels[14.0] > levels[44.0] > levels[140.0]


def test_steady_state_strong_drive_vanishes(atom):
    assert steady_state(atom, DriveField.from_mhz(500.0)).norm < 0.05


def test_steady_state_phase_oracle(atom):
    s = steady_state(atom, DriveField(mhz(140), 0.7))
    np.testing.assert_allclose(s.array, STEADY_ORACLE_PHI07, rtol=1e-12, atol=1e-15)


def test_steady_state_degenerate(atom):
    with pytest.raises(DegenerateSystemError):
        steady_state(atom.with_rates(gamma1=0.0, gamma2=0.0), DriveField.from_mhz(10.0))


@settings(max_examples=60, deadline=None)
@given(rates, st.floats(0.0, 20.0), rabis, phases)
def test_steady_state_is_fixed_point(g1, extra, rabi, phi):
    a = atom_from(g1, extra)
    d = DriveField(mhz(rabi), phi)
    B, b = build_bloch_generator(a, d)
    s = steady_state(a, d).array
    assert np.max(np.abs(B @ s + b)) <= 1e-9 * max(np.max(np.abs(B)), 1.0)


# --- exact propagation -----------------------------------------------------

def test_zero_duration_identity(atom, drive140):
    s = BlochVector(0.1, -0.2, 0.3)
    assert propagate_exact(s, atom, drive140, 0.0) == s


def test_lossless_pulses(lossless):
    W = mhz(50)
    g = BlochVector.ground()
    pi = propagate_exact(g, lossless, DriveField(W), math.pi / W)
    half = propagate_exact(g, lossless, DriveField(W), 0.5 * math.pi / W)
    np.testing.assert_allclose(pi.array, [0, 0, 1], atol=1e-12)
    np.testing.assert_allclose(half.array, [0, 1, 0], atol=1e-12)


@pytest.mark.parametrize("key", sorted(ODE_ORACLE))
def test_exact_matches_ode_oracle(atom, key):
    phi, t_ns = key
    s = propagate_exact(BlochVector.ground(), atom, DriveField(mhz(140), phi), ns(t_ns))
    np.testing.assert_allclose(s.array, ODE_ORACLE[key], atol=1e-11)


def test_rabi_maxima_decay_rate(atom, drive140):
    t = np.linspace(0, ns(60), 60001)
    sy = trajectory(BlochVector.ground(), atom, drive140, t).sy
    ss = steady_state(atom, drive140).sy
    k = np.flatnonzero((sy[1:-1] > sy[:-2]) & (sy[1:-1] >= sy[2:])) + 1
    # envelope of sy - sy_ss decays at (G1 + G2) / 2
    slope = np.polyfit(t[k], np.log(sy[k] - ss), 1)[0]
    assert -slope / TWO_PI / 1e6 == pytest.approx(13.7, rel=5e-3)
    assert -slope / TWO_PI / 1e6 == pytest.approx(13.5, rel=0.02)


def test_expm_stack_matches_scipy(atom, drive140):
    from scipy.linalg import expm
    B, _ = build_bloch_generator(atom, drive140)
    times = [0.0, ns(0.3), ns(7.0)]
    E = expm_stack(B, times)
    for Ei, t in zip(E, times):
        np.testing.assert_allclose(Ei, expm(B * t), atol=1e-12)


def test_expm_stack_degenerate_fallback():
    # repeated eigenvalue with a Jordan block: eigenvectors are singular
    B = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -2.0]])
    from scipy.linalg import expm
    np.testing.assert_allclose(expm_stack(B, [0.5])[0], expm(0.5 * B), atol=1e-14)


# --- RK4 -------------------------------------------------------------------

def test_rk_pure_dephasing(atom):
    t = ns(30)
    a = atom.with_rates(gamma1=0.0)
    s = propagate_rk(BlochVector(1, 0, 0), a, DriveField.off(), t)
    np.testing.assert_allclose(s.array, [math.exp(-a.gamma2 * t), 0, 0], atol=1e-8)
    # with relaxation on, sx still dephases at G2 while sz falls toward -1
    s = propagate_rk(BlochVector(1, 0, 0), atom, DriveField.off(), t)
    assert s.sx == pytest.approx(math.exp(-atom.gamma2 * t), abs=1e-8)


def test_rk_relaxation(atom):
    t = ns(30)
    s = propagate_rk(BlochVector.excited(), atom, DriveField.off(), t)
    assert s.sz == pytest.approx(2 * math.exp(-atom.gamma1 * t) - 1, abs=1e-8)


@pytest.mark.parametrize("rabi_mhz", [140.0, 44.0, 14.0, 500.0])
@pytest.mark.parametrize("phase", [0.0, 1.1])
def test_rk_matches_exact(atom, rabi_mhz, phase):
    d = DriveField(mhz(rabi_mhz), phase)
    s0 = BlochVector(0.3, -0.4, 0.5)
    for t_ns in (0.77, 13.0, 60.0):
        a = propagate_exact(s0, atom, d, ns(t_ns)).array
        b = propagate_rk(s0, atom, d, ns(t_ns)).array
        np.testing.assert_allclose(a, b, atol=1e-8)


def test_rk_step_validation(atom, drive140):
    with pytest.raises(ParameterError):
        propagate_rk(BlochVector.ground(), atom, drive140, 1e-9, dt=0.0)
    with pytest.raises(ParameterError):
        propagate_rk(BlochVector.ground(), atom, drive140, -1e-9)
    assert default_rk_step(atom, drive140) > 0


# --- trajectories ----------------------------------------------------------

def test_single_point_trajectory(atom, drive140):
    s0 = BlochVector(0.1, 0.2, 0.3)
    tr = trajectory(s0, atom, drive140, [ns(5)])
    assert len(tr) == 1 and tr[0] == s0


def test_grid_must_increase(atom, drive140):
    with pytest.raises(GridError):
        trajectory(BlochVector.ground(), atom, drive140, [0.0, 2e-9, 1e-9])


def test_sx_stays_zero_at_phase_zero(atom, drive140):
    tr = trajectory(BlochVector.ground(), atom, drive140, np.linspace(0, ns(60), 601))
    assert np.max(np.abs(tr.sx)) <= 1e-12


def _extrema(t, y):
    dy = np.diff(y)
    return t[1:-1][np.sign(dy[:-1]) != np.sign(dy[1:])]


def test_sy_and_sz_extrema_quarter_period_apart(atom, lossless, drive140):
    t = np.linspace(0, ns(30), 300001)
    period = TWO_PI / drive140.rabi
    for a, tol in ((lossless, 1e-4), (atom, 0.05)):
        tr = trajectory(BlochVector.ground(), a, drive140, t)
        ey, ez = _extrema(t, tr.sy)[:4], _extrema(t, tr.sz)[:4]
        np.testing.assert_allclose(ez - ey, period / 4, atol=tol * period)


# --- invariants ------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(rates, st.floats(0.0, 20.0), rabis, phases, unit_ball(), st.floats(0.0, 200.0))
def test_norm_stays_in_ball(g1, extra, rabi, phi, s0, t_ns):
    a = atom_from(g1, extra)
    s = propagate_exact(s0, a, DriveField(mhz(rabi), phi), ns(t_ns))
    assert s.norm <= 1 + 1e-9


@settings(max_examples=60, deadline=None)
@given(rates, st.floats(0.0, 20.0), rabis, phases, unit_ball(), unit_ball(),
       st.floats(0.0, 100.0))
def test_contraction(g1, extra, rabi, phi, s1, s2, t_ns):
    # the symmetric part of B is diag(-G2, -G2, -G1)
    a = atom_from(g1, extra)
    d = DriveField(mhz(rabi), phi)
    t = ns(t_ns)
    gap0 = np.linalg.norm(s1.array - s2.array)
    gap = np.linalg.norm(propagate_exact(s1, a, d, t).array - propagate_exact(s2, a, d, t).array)
    assert gap <= math.exp(-min(a.gamma1, a.gamma2) * t) * gap0 + 1e-12


@settings(max_examples=60, deadline=None)
@given(rates, st.floats(0.0, 20.0), st.floats(1.0, 600.0), phases, unit_ball(),
       st.floats(0.0, 50.0))
def test_phase_covariance(g1, extra, rabi, phi, s0, t_ns):
    a = atom_from(g1, extra)
    W, t = mhz(rabi), ns(t_ns)
    direct = propagate_exact(s0, a, DriveField(W, phi), t)
    base = propagate_exact(rotate_z(s0, phi), a, DriveField(W, 0.0), t)
    np.testing.assert_allclose(direct.array, rotate_z(base, -phi).array, atol=1e-10)


def test_eigenvalues_real_parts(atom, drive140):
    lam = generator_eigenvalues(atom, drive140)
    assert np.all(lam.real < 0)
    complex_pair = lam[np.abs(lam.imag) > 0]
    np.testing.assert_allclose(complex_pair.real, -(atom.gamma1 + atom.gamma2) / 2, rtol=1e-9)


def test_zero_damping_unitarity(lossless):
    W = mhz(140)
    d = DriveField(W, 0.3)
    s0 = BlochVector(0.6, 0.0, -0.8)
    period = TWO_PI / W
    for t in np.linspace(0, 100 * period, 11):
        assert propagate_exact(s0, lossless, d, t).norm == pytest.approx(1.0, abs=1e-9)
        assert propagate_rk(s0, lossless, d, t).norm == pytest.approx(1.0, abs=1e-9)
