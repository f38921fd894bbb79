import math
import warnings

import numpy as np
import pytest

from qedlab import (
    BlochVector,
    DriveField,
    Pulse,
    ReadoutConfig,
    calibrate_pulses,
    coherent_current,
    emitted_power,
    fit_exponential,
    rabi_experiment,
    readout_average,
    run_sequence,
    t1_experiment,
    t2_experiment,
)
from qedlab.errors import CalibrationError, ParameterError, SequenceError
from qedlab.units import HBAR, TWO_PI, ns

from conftest import mhz

# the default readout window is only 2.86 dephasing times long, so it is flagged
pytestmark = pytest.mark.filterwarnings("ignore:readout window covers only:UserWarning")

# hbar * wa * G1 / 2 with CODATA hbar (tools/oracles.py)
POWER_EXCITED_W = 3.766738314179373e-16
# dense-grid (1e-5 ns) DOP853 search for the first sy maximum and following zero
CALIBRATION_ORACLE_NS = {140.0: (1.82406, 3.930465217802071), 500.0: (0.50295, 1.024414459945632)}


# --- emission observables --------------------------------------------------

def test_current_ground_is_zero(atom):
    assert coherent_current(BlochVector.ground(), atom) == 0


def test_current_quadratures(atom):
    scale = HBAR * atom.gamma1 / atom.phi_p
    iy = coherent_current(BlochVector(0, 1, 0), atom)
    ix = coherent_current(BlochVector(1, 0, 0), atom)
    assert iy.imag == 0 and iy.real == pytest.approx(scale / 2, rel=1e-14)
    assert ix.real == 0 and ix.imag == pytest.approx(scale / 2, rel=1e-14)


def test_current_needs_coupling(atom):
    from dataclasses import replace
    bare = replace(atom, phi_p=0.0, persistent_current=None, mutual_inductance=None)
    with pytest.raises(ParameterError):
        coherent_current(BlochVector(0, 1, 0), bare)


def test_power_values(atom):
    assert emitted_power(BlochVector.ground(), atom) == 0
    top = emitted_power(BlochVector.excited(), atom)
    assert top == pytest.approx(POWER_EXCITED_W, rel=1e-12)
    assert emitted_power(BlochVector(0, 0, 0), atom) == pytest.approx(top / 2, rel=1e-15)


# --- readout ---------------------------------------------------------------

def test_readout_ground(atom):
    rec = readout_average(BlochVector.ground(), atom, ReadoutConfig(t_r=0.0))
    assert rec.i_avg == 0 and rec.p_avg == 0


def test_readout_excited_power(atom):
    rec = readout_average(BlochVector.excited(), atom, ReadoutConfig(t_r=0.0))
    assert rec.p_avg == pytest.approx(HBAR * atom.omega_a / (2 * 250e-9), rel=1e-12)
    assert rec.p_avg == pytest.approx(1.31e-17, rel=0.01)


def test_readout_current_real_for_sy(atom):
    rec = readout_average(BlochVector(0, 1, 0), atom, ReadoutConfig(t_r=0.0))
    expected = HBAR * atom.gamma1 / (2 * atom.phi_p * atom.gamma2 * 250e-9)
    assert rec.i_avg.imag == 0
    assert rec.i_avg.real == pytest.approx(expected, rel=1e-12)
    assert rec.sigma_minus == 0.5


def test_finite_window_factor(atom):
    cfg = ReadoutConfig(t_r=0.0, dt_r=ns(50))
    s = BlochVector(0, 0.6, 0.8)
    tail = readout_average(s, atom, cfg)
    cut = readout_average(s, atom, cfg, finite_window=True)
    assert cut.p_avg / tail.p_avg == pytest.approx(-math.expm1(-atom.gamma1 * cfg.dt_r))
    assert abs(cut.i_avg / tail.i_avg) == pytest.approx(-math.expm1(-atom.gamma2 * cfg.dt_r))


def test_short_window_warns(atom):
    with pytest.warns(UserWarning):
        readout_average(BlochVector.ground(), atom, ReadoutConfig(t_r=0.0, dt_r=ns(10)))


def test_readout_config_validation():
    with pytest.raises(SequenceError):
        ReadoutConfig(t_r=ns(300), dt_r=ns(50), t_rep=ns(250))
    with pytest.raises(SequenceError):
        ReadoutConfig(t_r=0.0, dt_r=0.0)


# --- sequences -------------------------------------------------------------

def test_empty_sequence(atom):
    rec = run_sequence([], ReadoutConfig(t_r=ns(10)), atom)
    assert rec.state == BlochVector.ground()
    assert rec.p_avg == 0


def test_lossless_pi_pulse_incoherent(lossless):
    W = mhz(100)
    rec = run_sequence([Pulse(0.0, math.pi / W, DriveField(W))], ReadoutConfig(t_r=math.pi / W),
                       lossless)
    assert rec.sigma_z == pytest.approx(1.0, abs=1e-12)
    assert abs(rec.sigma_minus) < 1e-12


def test_half_pulse_decoheres(atom, drive140):
    t_half, _ = calibrate_pulses(atom, drive140)
    rec = run_sequence([Pulse(0.0, t_half, drive140)], ReadoutConfig(t_r=t_half), atom)
    assert 0.45 < abs(rec.sigma_minus) < 0.5


def test_sequence_ordering(atom, drive140):
    seq = [Pulse(0.0, ns(2), drive140), Pulse(ns(1), ns(2), drive140, "M")]
    with pytest.raises(SequenceError):
        run_sequence(seq, ReadoutConfig(t_r=ns(5)), atom)
    with pytest.raises(SequenceError):
        run_sequence([Pulse(0.0, ns(2), drive140)], ReadoutConfig(t_r=ns(1)), atom)
    with pytest.raises(SequenceError):
        Pulse(0.0, ns(1), drive140, "R")


def test_free_gap_between_pulses(atom, drive140):
    # a gap in the sequence is free decay
    seq = [Pulse(0.0, ns(1), drive140), Pulse(ns(3), ns(1), drive140)]
    rec = run_sequence(seq, ReadoutConfig(t_r=ns(4)), atom)
    from qedlab import propagate_exact
    s = propagate_exact(BlochVector.ground(), atom, drive140, ns(1))
    s = propagate_exact(s, atom, DriveField.off(), ns(2))
    s = propagate_exact(s, atom, drive140, ns(1))
    np.testing.assert_allclose(rec.state.array, s.array, atol=1e-14)


# --- calibration -----------------------------------------------------------

def test_calibration_lossless(lossless):
    W = mhz(140)
    t_half, t_pi = calibrate_pulses(lossless, DriveField(W))
    assert t_half == pytest.approx(math.pi / (2 * W), abs=1e-13)
    assert t_pi == pytest.approx(math.pi / W, abs=1e-13)


@pytest.mark.parametrize("rabi_mhz", [140.0, 500.0])
def test_calibration_against_dense_grid(atom, rabi_mhz):
    t_half, t_pi = calibrate_pulses(atom, DriveField.from_mhz(rabi_mhz))
    ref_half, ref_pi = CALIBRATION_ORACLE_NS[rabi_mhz]
    assert t_half * 1e9 == pytest.approx(ref_half, abs=1e-4)
    assert t_pi * 1e9 == pytest.approx(ref_pi, abs=1e-4)


def test_calibration_strong_drive_near_lossless(atom):
    W = mhz(500)
    _, t_pi = calibrate_pulses(atom, DriveField(W))
    assert t_pi == pytest.approx(math.pi / W, rel=0.05)


@pytest.mark.xfail(strict=True, reason="the positive stationary level of sy delays its zero; "
                   "at 140 MHz the pi length is 10% above pi/W")
def test_calibration_140_within_five_percent(atom):
    W = mhz(140)
    _, t_pi = calibrate_pulses(atom, DriveField(W))
    assert t_pi == pytest.approx(math.pi / W, rel=0.05)


def test_calibration_overdamped(atom):
    with pytest.raises(CalibrationError):
        calibrate_pulses(atom, DriveField.from_mhz(1.0))


# --- Rabi sweep ------------------------------------------------------------

def test_rabi_sweep_shape(atom, drive140):
    grid = np.linspace(0, ns(60), 601)
    table = rabi_experiment(atom, drive140, grid)
    np.testing.assert_array_equal(table.states[0], [0, 0, -1])
    assert np.max(np.abs(table.states[:, 0])) <= 1e-9
    np.testing.assert_allclose(table.sigma_minus.real, table.states[:, 1] / 2)
    assert np.all(table.p_avg >= 0)


def test_rabi_sweep_rejects_empty(atom, drive140):
    with pytest.raises(ParameterError):
        rabi_experiment(atom, drive140, [])


def _extrema(t, y):
    dy = np.diff(y)
    return t[1:-1][np.sign(dy[:-1]) != np.sign(dy[1:])]


def _zeros(t, y):
    # sign changes after the starting point, where sy = 0 trivially
    return t[2:][(y[1:-1] > 0) != (y[2:] > 0)]


def test_dipole_zeros_align_with_power_extrema(atom, lossless, drive140):
    grid = np.linspace(0, ns(20), 20001)
    period = TWO_PI / drive140.rabi
    for a, tol in ((lossless, 1e-3), (atom, 0.1)):
        table = rabi_experiment(a, drive140, grid)
        zy = _zeros(grid, table.states[:, 1])[:3]
        ez = _extrema(grid, table.states[:, 2])[:3]
        np.testing.assert_allclose(zy, ez, atol=tol * period)


# --- T2 / T1 ---------------------------------------------------------------

def test_t2_trace(atom, drive140):
    delays = np.linspace(0, 5 / atom.gamma2, 101)
    trace = t2_experiment(atom, drive140, delays)
    assert np.argmax(np.abs(trace.values)) == 0
    fit = fit_exponential(trace)
    assert fit.converged
    assert fit["rate_mhz"] == pytest.approx(9.1, rel=0.01)


def test_t2_doubling_rate_halves_lifetime(atom, drive140):
    delays = np.linspace(0, 5 / atom.gamma2, 101)
    slow = fit_exponential(t2_experiment(atom, drive140, delays))
    fast_atom = atom.with_rates(gamma2=2 * atom.gamma2)
    fast = fit_exponential(t2_experiment(fast_atom, drive140, delays))
    assert fast["lifetime_ns"] == pytest.approx(slow["lifetime_ns"] / 2, rel=1e-6)


def test_t1_trace(atom, drive140):
    delays = np.linspace(0, 5 / atom.gamma1, 101)
    trace = t1_experiment(atom, drive140, delays)
    assert 0 < trace.values[0] < 1
    fit = fit_exponential(trace)
    assert fit.converged
    assert fit["rate_mhz"] == pytest.approx(18.3, rel=0.01)


def _crossing(trace):
    v, d = trace.values, trace.delays
    k = int(np.flatnonzero(v <= 0)[0])
    return d[k - 1] + (d[k] - d[k - 1]) * v[k - 1] / (v[k - 1] - v[k])


def test_t1_zero_crossing_with_hard_pulses(atom):
    delays = np.linspace(0, 5 / atom.gamma1, 101)
    trace = t1_experiment(atom, DriveField.from_mhz(2000.0), delays)
    assert trace.values[0] > 0.9
    assert _crossing(trace) == pytest.approx(math.log(2) / atom.gamma1, abs=delays[1])


@pytest.mark.xfail(strict=True, reason="pi pulse infidelity at 140 MHz leaves the atom "
                   "partly unexcited, pulling the crossing well before ln2/G1")
def test_t1_zero_crossing_at_140(atom, drive140):
    delays = np.linspace(0, 5 / atom.gamma1, 101)
    trace = t1_experiment(atom, drive140, delays)
    assert _crossing(trace) == pytest.approx(math.log(2) / atom.gamma1, abs=delays[1])


def test_default_window_is_flagged(atom):
    with pytest.warns(UserWarning, match="2.86 dephasing times"):
        readout_average(BlochVector.ground(), atom, ReadoutConfig(t_r=0.0))


def test_sweeps_do_not_repeat_the_window_warning(atom, drive140):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rabi_experiment(atom, drive140, [0.0, ns(1)])
