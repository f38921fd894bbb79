"""Two-time correlation of dipole fluctuations and the resonance-fluorescence spectrum.

The correlation ``C(t) = <dS+(0) dS-(t)>_ss`` is built from a complex
vector ``s(t) = <dS+(0) dsigma(t)>_ss`` that obeys the homogeneous Bloch
equation ``ds/dt = B s`` (quantum regression), and ``C = (s_x - i s_y) / 2``.

Two routes are provided:

* :func:`correlation_direct` propagates ``s`` from its initial value with the
  matrix exponential of ``B``.
* :func:`correlation_via_differencing` never touches ``B`` explicitly. It runs
  the full (inhomogeneous) Bloch equations from the four preparations
  ``(+-1, 0, 0)`` and ``(0, +-1, 0)``; half-differences of each pair cancel
  both the pumping term and the steady state, and
  ``C = {[s'_x - i s'_y] + i [s''_x - i s''_y]} / 4``.

The spectrum is ``S(w) = (hbar w_a G1 / 2 pi) * integral C(t) exp(i w t) dt``
with ``C(-t) = conj(C(t))``; arrays carry ``S(f) = 2 pi S(w)`` in W/Hz.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    AtomParams,
    BlochVector,
    DriveField,
    _affine_evolve,
    _eigensystem,
    _steady_state_array,
    as_bloch,
    build_bloch_generator,
    check_grid,
    expm_stack,
    propagate_exact,
)
from .errors import GridError, ParameterError, TruncationError
from .units import HBAR, TWO_PI

STRONG_DRIVE = "strong_drive"
GENERAL = "general"

DEAD_TIME = 0.8e-9
DECAY_TARGET = 1e-6
# t_max = DECAY_SPAN / slowest decay rate puts exp(-DECAY_SPAN) < DECAY_TARGET.
DECAY_SPAN = 14.0
GRID_POINTS_PER_TIMESCALE = 40
MIN_ZERO_PAD = 8

# Fluctuation vector -> sigma-minus projection: C = (s_x - i s_y) / 2.
_MINUS = np.array([0.5, -0.5j, 0.0])


@dataclass
class CorrelationTrace:
    """``values[i] = <dS+(0) dS-(t_i)>_ss`` sampled on ``t_grid`` (s, from 0)."""

    t_grid: np.ndarray
    values: np.ndarray
    masked: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.t_grid = check_grid(self.t_grid)
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.t_grid.shape:
            raise GridError("correlation values and grid differ in length")
        if self.masked is not None:
            self.masked = np.asarray(self.masked, dtype=bool)

    def __len__(self):
        return len(self.t_grid)


@dataclass
class Spectrum:
    """Power spectral density ``S(f) = 2 pi S(w)`` versus detuning ``(w - w_a)/2 pi`` (Hz)."""

    detuning_grid: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        self.detuning_grid = np.asarray(self.detuning_grid, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        if self.detuning_grid.shape != self.density.shape:
            raise GridError("spectrum grid and density differ in length")
        if self.detuning_grid.ndim != 1 or self.detuning_grid.size == 0:
            raise GridError("spectrum grid must be a non-empty 1-D array")

    @property
    def peak(self):
        return float(np.max(self.density))

    def normalized(self):
        peak = self.peak
        if peak <= 0:
            raise ParameterError("cannot normalize a spectrum without a positive peak")
        return replace(self, density=self.density / peak)

    def window(self, half_span):
        keep = np.abs(self.detuning_grid) <= half_span
        return Spectrum(self.detuning_grid[keep], self.density[keep])

    def integrate_angular(self):
        """``integral S(w) dw`` over the grid (trapezoid on the linear grid)."""
        # S(f) df = 2 pi S(w) dw / (2 pi) = S(w) dw
        return float(np.trapezoid(self.density, self.detuning_grid))


def spectral_prefactor(atom: AtomParams):
    """``hbar w_a G1``: the power scale shared by every spectrum (W)."""
    return HBAR * atom.omega_a * atom.gamma1


def slowest_decay(atom: AtomParams):
    return min(atom.gamma2, 0.5 * (atom.gamma1 + atom.gamma2))


def default_correlation_grid(atom: AtomParams, drive: DriveField) -> np.ndarray:
    """Uniform grid resolving the Rabi period and running ``14 / slowest rate``."""
    lam = slowest_decay(atom)
    if lam <= 0:
        raise ParameterError("correlation grid needs a positive dephasing rate")
    scales = [1.0 / atom.gamma2]
    if drive.rabi > 0:
        scales.append(TWO_PI / drive.rabi)
    dt = min(scales) / GRID_POINTS_PER_TIMESCALE
    t_max = DECAY_SPAN / lam
    n = int(math.ceil(t_max / dt))
    return dt * np.arange(n + 1)


def _check_origin(t_grid):
    t = check_grid(t_grid)
    if t[0] != 0.0:
        raise GridError("correlation grids must start at t = 0")
    return t


def regression_initial_condition(atom: AtomParams, drive: DriveField,
                                 mode: str = STRONG_DRIVE) -> np.ndarray:
    """Initial fluctuation vector ``s(0) = <dS+ dsigma>_ss``.

    ``strong_drive`` returns ``(1/2, i/2, 0)``. ``general`` evaluates the
    Pauli products on the true steady state::

        s_x = (1 + z)/2 - <S+> x
        s_y = i (1 + z)/2 - <S+> y
        s_z = -<S+> (1 + z)

    with ``<S+> = (x + i y)/2``.
    """
    if mode == STRONG_DRIVE:
        return np.array([0.5, 0.5j, 0.0])
    if mode != GENERAL:
        raise ParameterError(f"unknown initial-condition mode {mode!r}")
    x, y, z = _steady_state_array(atom, drive)
    sp = 0.5 * (x + 1j * y)
    pop = 0.5 * (1.0 + z)
    return np.array([pop - sp * x, 1j * pop - sp * y, -sp * (1.0 + z)])


def fluctuation_evolution(atom, drive, t_grid, s0) -> np.ndarray:
    """``exp(B t) s0`` for every grid time; shape ``(n, 3)`` complex."""
    B, _ = build_bloch_generator(atom, drive)
    E = expm_stack(B, t_grid)
    return E @ np.asarray(s0, dtype=complex)


def correlation_direct(atom: AtomParams, drive: DriveField, t_grid=None,
                       mode: str = STRONG_DRIVE) -> CorrelationTrace:
    """Correlation from the regression equation ``ds/dt = B s``."""
    t = default_correlation_grid(atom, drive) if t_grid is None else _check_origin(t_grid)
    s = fluctuation_evolution(atom, drive, t, regression_initial_condition(atom, drive, mode))
    return CorrelationTrace(t, s @ _MINUS)


@dataclass
class DifferencingRun:
    """The four Bloch trajectories behind a differencing reconstruction."""

    t_grid: np.ndarray
    x_plus: np.ndarray
    x_minus: np.ndarray
    y_plus: np.ndarray
    y_minus: np.ndarray

    @property
    def s_prime(self):
        return 0.5 * (self.x_plus - self.x_minus)

    @property
    def s_double_prime(self):
        return 0.5 * (self.y_plus - self.y_minus)

    def correlation(self) -> CorrelationTrace:
        sp, sdp = self.s_prime, self.s_double_prime
        c = ((sp[:, 0] - 1j * sp[:, 1]) + 1j * (sdp[:, 0] - 1j * sdp[:, 1])) / 4.0
        return CorrelationTrace(self.t_grid, c)


def ideal_preparations():
    """The four prepared states: x+, x-, y+, y-."""
    return (
        BlochVector(1.0, 0.0, 0.0),
        BlochVector(-1.0, 0.0, 0.0),
        BlochVector(0.0, 1.0, 0.0),
        BlochVector(0.0, -1.0, 0.0),
    )


def preparation_phases(offset: float = 0.0):
    """Drive phases of the pi/2 pulses preparing x+, x-, y+, y- from the ground state."""
    return (
        math.pi / 2 + offset,
        3 * math.pi / 2 + offset,
        0.0 + offset,
        math.pi + offset,
    )


def pulse_preparations(atom: AtomParams, rabi: float, duration: float | None = None,
                       phase_offset: float = 0.0):
    """Prepare the four states with pi/2 pulses of phase ``pi -+ pi/2`` and ``pi/2 -+ pi/2``.

    ``duration`` defaults to the lossless pi/2 length ``pi / (2 rabi)``.
    """
    if rabi <= 0:
        raise ParameterError("pulse preparation needs a non-zero Rabi frequency")
    if duration is None:
        duration = 0.5 * math.pi / rabi
    ground = BlochVector.ground()
    return tuple(
        propagate_exact(ground, atom, DriveField(rabi, phi), duration)
        for phi in preparation_phases(phase_offset)
    )


def differencing_run(atom: AtomParams, drive: DriveField, t_grid=None,
                     preparations=None) -> DifferencingRun:
    """Evolve the four preparations under the full Bloch equations."""
    t = default_correlation_grid(atom, drive) if t_grid is None else _check_origin(t_grid)
    if preparations is None:
        preparations = ideal_preparations()
    trajs = [_affine_evolve(as_bloch(p).array, atom, drive, t) for p in preparations]
    return DifferencingRun(t, *trajs)


def correlation_via_differencing(atom: AtomParams, drive: DriveField, t_grid=None,
                                 preparations=None) -> CorrelationTrace:
    """Correlation from pairwise half-differences of four Bloch trajectories."""
    return differencing_run(atom, drive, t_grid, preparations).correlation()


def apply_dead_time(corr: CorrelationTrace, atom: AtomParams, drive: DriveField,
                    dead_time: float = DEAD_TIME, mode: str = STRONG_DRIVE) -> CorrelationTrace:
    """Replace samples before ``dead_time`` by the regression solution and flag them."""
    mask = corr.t_grid < dead_time
    values = corr.values.copy()
    if np.any(mask):
        filled = correlation_direct(atom, drive, corr.t_grid, mode).values
        values[mask] = filled[mask]
    return CorrelationTrace(corr.t_grid, values, masked=mask)


def _is_uniform(t):
    if len(t) < 2:
        return False
    d = np.diff(t)
    return np.allclose(d, d[0], rtol=1e-9, atol=0.0)


def incoherent_spectrum(corr: CorrelationTrace, atom: AtomParams,
                        zero_pad: int = MIN_ZERO_PAD,
                        decay_target: float = DECAY_TARGET) -> Spectrum:
    """Fourier transform of the Hermitian-extended correlation.

    The trapezoid rule on the uniform grid, with the trace mirrored to
    negative times as ``conj(C(t))``, is evaluated for all frequencies at
    once by an FFT of the zero-padded, circularly arranged samples.
    """
    t, c = corr.t_grid, corr.values
    if t[0] != 0.0 or not _is_uniform(t):
        raise GridError("spectrum needs a uniform correlation grid starting at 0")
    if zero_pad < MIN_ZERO_PAD:
        raise ParameterError(f"zero padding must be at least {MIN_ZERO_PAD}x")
    dt = t[1] - t[0]
    c0 = abs(c[0])
    if c0 > 0 and abs(c[-1]) > decay_target * c0:
        # Estimate from the decay seen over the last half of the trace.
        half = len(c) // 2
        ratio = abs(c[-1]) / max(abs(c[half]), 1e-300)
        rate = -math.log(ratio) / (t[-1] - t[half]) if 0 < ratio < 1 else 0.0
        need = math.log(abs(c[-1]) / (decay_target * c0)) / rate + t[-1] if rate > 0 else math.inf
        raise TruncationError(
            f"correlation has not decayed below {decay_target:g} of C(0) "
            f"(|C(t_max)|/|C(0)| = {abs(c[-1]) / c0:.3g}); need t_max >= {need:.4g} s",
            required_t_max=need,
        )
    n = len(c)
    m = zero_pad * (2 * n - 1)
    m += 1 - m % 2  # odd length: the detuning grid is symmetric about zero
    buf = np.zeros(m, dtype=complex)
    w = np.ones(n)
    w[-1] = 0.5
    buf[:n] = w * c
    buf[m - n + 1:] = np.conj(w[1:] * c[1:])[::-1]
    # sum_n x_n exp(+i w_k t_n) with w_k = 2 pi k / (m dt)
    transform = np.fft.ifft(buf) * m * dt
    freqs = np.fft.fftfreq(m, d=dt)
    order = np.argsort(freqs)
    density = spectral_prefactor(atom) * transform[order]
    peak = np.max(np.abs(density.real)) if density.size else 0.0
    if peak > 0 and np.max(np.abs(density.imag)) > 1e-10 * peak:
        warnings.warn("spectrum transform has a non-negligible imaginary part", RuntimeWarning)
    return Spectrum(freqs[order], density.real)


def analytic_triplet(atom: AtomParams, drive: DriveField, detuning_grid,
                     mode: str = STRONG_DRIVE) -> Spectrum:
    """Closed-form spectrum as a sum of complex Lorentzians from the eigenmodes of ``B``.

    With ``C(t) = sum_k c_k exp(l_k t)`` for ``t >= 0``,
    ``2 pi S(w) = hbar w_a G1 * 2 Re sum_k c_k / (-l_k - i w)``.
    """
    f = np.asarray(detuning_grid, dtype=float)
    B, _ = build_bloch_generator(atom, drive)
    eig = _eigensystem(B)
    s0 = regression_initial_condition(atom, drive, mode)
    if eig is None:
        warnings.warn(
            "near-degenerate Bloch spectrum; analytic triplet falls back to the numerical transform",
            RuntimeWarning,
        )
        corr = correlation_direct(atom, drive, mode=mode)
        numeric = incoherent_spectrum(corr, atom)
        return Spectrum(f, np.interp(f, numeric.detuning_grid, numeric.density))
    lam, V, Vinv = eig
    weights = (_MINUS @ V) * (Vinv @ s0)
    w = TWO_PI * f
    terms = weights[None, :] / (-lam[None, :] - 1j * w[:, None])
    density = spectral_prefactor(atom) * 2.0 * terms.sum(axis=1).real
    return Spectrum(f, density)


def free_induction_correlation(atom: AtomParams, t_grid=None) -> CorrelationTrace:
    """Undriven decay of a saturated atom (population 1/2, no mean polarization).

    The saturated state has fluctuation vector ``(1/2, i/2, 0)``, so with
    ``W = 0`` the correlation is ``exp(-G2 t) / 2``.
    """
    drive = DriveField.off()
    t = default_correlation_grid(atom, drive) if t_grid is None else _check_origin(t_grid)
    s = fluctuation_evolution(atom, drive, t, np.array([0.5, 0.5j, 0.0]))
    return CorrelationTrace(t, s @ _MINUS)


def free_induction_spectrum(atom: AtomParams, t_grid=None) -> Spectrum:
    """Lorentzian emission line of free-induction decay, HWHM ``G2 / 2 pi``."""
    if atom.gamma2 <= 0:
        raise ParameterError("free-induction line needs gamma2 > 0")
    return incoherent_spectrum(free_induction_correlation(atom, t_grid), atom)
