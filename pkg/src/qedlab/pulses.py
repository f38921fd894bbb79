"""Virtual pulse experiments and the emission observables read out after them.

Sign convention
---------------
The homodyne detector sees the forward coherent wave, whose amplitude is
proportional to the dipole ``<i sigma->``. With ``sigma- = (sx - i sy)/2``
this is

    <i sigma-> = (sy + i sx) / 2,

so the in-phase quadrature carries ``sy/2`` and the quadrature carries
``sx/2``. Every complex dipole or current in this module uses this
convention (see :func:`dipole_amplitude`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    AtomParams,
    BlochVector,
    DriveField,
    as_bloch,
    build_bloch_generator,
    propagate_exact,
    trajectory,
)
from .errors import CalibrationError, ParameterError, SequenceError
from .inference import DecayTrace
from .units import HBAR, TWO_PI

DEFAULT_DT_R = 50e-9
DEFAULT_T_REP = 250e-9
# Readout windows shorter than this many dephasing times are flagged.
WINDOW_WARN = 5.0
CALIBRATION_TOL = 1e-13  # s, i.e. 1e-4 ns
_SEQ_TOL = 1e-18


@dataclass(frozen=True)
class Pulse:
    """Rectangular resonant pulse starting at ``start`` (s) for ``duration`` (s)."""

    start: float
    duration: float
    drive: DriveField
    label: str = "P"

    def __post_init__(self):
        if self.label not in ("P", "M"):
            raise SequenceError(f"pulse label must be 'P' or 'M', got {self.label!r}")
        if not self.duration >= 0:
            raise SequenceError(f"pulse duration must be non-negative, got {self.duration}")
        if not self.start >= 0:
            raise SequenceError(f"pulse start must be non-negative, got {self.start}")

    @property
    def end(self):
        return self.start + self.duration


@dataclass(frozen=True)
class ReadoutConfig:
    """Readout pulse R: start ``t_r``, window ``dt_r`` and repetition period ``t_rep`` (s)."""

    t_r: float
    dt_r: float = DEFAULT_DT_R
    t_rep: float = DEFAULT_T_REP

    def __post_init__(self):
        if not self.t_r >= 0:
            raise SequenceError(f"readout start must be non-negative, got {self.t_r}")
        if not self.dt_r > 0:
            raise SequenceError(f"readout window must be positive, got {self.dt_r}")
        if self.t_rep < self.t_r + self.dt_r:
            raise SequenceError(
                f"repetition period {self.t_rep} s is shorter than readout end {self.t_r + self.dt_r} s"
            )


@dataclass(frozen=True)
class ReadoutRecord:
    """Averaged detector outputs for one sequence.

    ``sigma_minus`` is the homodyne dipole ``<i sigma->`` (module docstring),
    ``i_avg`` the averaged VNA current (A) and ``p_avg`` the averaged SA
    power (W).
    """

    sigma_minus: complex
    sigma_z: float
    i_avg: complex
    p_avg: float
    state: BlochVector = field(repr=False)


def dipole_amplitude(state) -> complex:
    """``<i sigma-> = (sy + i sx) / 2``."""
    s = as_bloch(state)
    return complex(0.5 * s.sy, 0.5 * s.sx)


def coherent_current(state, atom: AtomParams) -> complex:
    """Forward coherent-emission current ``(hbar G1 / phi_p) <i sigma->`` at the atom (A)."""
    if atom.phi_p == 0:
        raise ParameterError("coherent current undefined for phi_p = 0")
    return HBAR * atom.gamma1 / atom.phi_p * dipole_amplitude(state)


def emitted_power(state, atom: AtomParams) -> float:
    """One-direction emitted power ``(hbar w_a G1 / 4)(1 + sz)`` (W)."""
    s = as_bloch(state)
    return HBAR * atom.omega_a * atom.gamma1 / 4.0 * (1.0 + s.sz)


def _window_integral(rate, dt_r, finite_window):
    """``integral_0^dt_r exp(-rate t) dt``; the infinite tail ``1/rate`` unless ``finite_window``."""
    if rate == 0:
        return dt_r
    if finite_window:
        return -math.expm1(-rate * dt_r) / rate
    return 1.0 / rate


def readout_average(state_at_tr, atom: AtomParams, cfg: ReadoutConfig,
                    finite_window: bool = False) -> ReadoutRecord:
    """Detector averages over one repetition period.

    By default ``i_avg = hbar G1 / (phi_p G2 Tr) <i sigma->`` and
    ``p_avg = hbar w_a / (4 Tr) (1 + sz)``. With ``finite_window`` the
    exponential tails are cut at ``dt_r``, multiplying by ``1 - exp(-G dt_r)``.
    """
    s = as_bloch(state_at_tr)
    if atom.phi_p == 0:
        raise ParameterError("readout undefined for phi_p = 0")
    if 0 < atom.gamma2 * cfg.dt_r < WINDOW_WARN:
        warnings.warn(
            f"readout window covers only {atom.gamma2 * cfg.dt_r:.2f} dephasing times",
            UserWarning,
            stacklevel=2,
        )
    dip = dipole_amplitude(s)
    i_avg = (HBAR * atom.gamma1 / atom.phi_p) * dip \
        * _window_integral(atom.gamma2, cfg.dt_r, finite_window) / cfg.t_rep
    p_avg = (HBAR * atom.omega_a * atom.gamma1 / 4.0) * (1.0 + s.sz) \
        * _window_integral(atom.gamma1, cfg.dt_r, finite_window) / cfg.t_rep
    return ReadoutRecord(sigma_minus=dip, sigma_z=s.sz, i_avg=i_avg, p_avg=max(p_avg, 0.0), state=s)


def check_sequence(seq, t_r=None):
    """Raise :class:`SequenceError` unless pulses are ordered, disjoint and end before ``t_r``."""
    prev_end = 0.0
    for i, p in enumerate(seq):
        if p.start < prev_end - _SEQ_TOL:
            raise SequenceError(f"pulse {i} ({p.label}) starts at {p.start} s before previous end {prev_end} s")
        prev_end = p.end
    if t_r is not None and t_r < prev_end - _SEQ_TOL:
        raise SequenceError(f"readout at {t_r} s starts before last pulse ends at {prev_end} s")


def evolve_sequence(seq, atom: AtomParams, until: float, state0=None) -> BlochVector:
    """State at time ``until`` after running the pulses from ``state0`` (ground by default) at t = 0."""
    check_sequence(seq, until)
    state = BlochVector.ground() if state0 is None else as_bloch(state0)
    t = 0.0
    free = DriveField.off()
    for p in seq:
        if p.start > t:
            state = propagate_exact(state, atom, free, p.start - t)
        state = propagate_exact(state, atom, p.drive, p.duration)
        t = max(t, p.end)
    if until > t:
        state = propagate_exact(state, atom, free, until - t)
    return state


def run_sequence(seq, cfg: ReadoutConfig, atom: AtomParams,
                 finite_window: bool = False) -> ReadoutRecord:
    """Prepare the ground state, apply the pulses, free-evolve to ``t_r`` and read out."""
    state = evolve_sequence(seq, atom, cfg.t_r)
    return readout_average(state, atom, cfg, finite_window)


def _sy_rate(atom, drive, state):
    B, b = build_bloch_generator(atom, drive)
    return float((B @ state.array + b)[1])


def _bisect(f, lo, hi, tol=CALIBRATION_TOL):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate_pulses(atom: AtomParams, drive: DriveField):
    """Pi/2 and pi pulse lengths read off the damped Rabi trace of ``sy``.

    The pi/2 length is the first maximum of ``sy(t)`` starting from the ground
    state, the pi length its first zero after that maximum; both are refined
    by bisection on the exact solution to 1e-4 ns.
    """
    rabi = drive.rabi
    if not rabi > 0.5 * (atom.gamma1 + atom.gamma2):
        raise CalibrationError(
            f"Rabi frequency {rabi:.4g} rad/s does not exceed (G1+G2)/2 = "
            f"{0.5 * (atom.gamma1 + atom.gamma2):.4g} rad/s: drive is overdamped"
        )
    d0 = DriveField(rabi, 0.0)
    ground = BlochVector.ground()

    def state(t):
        return propagate_exact(ground, atom, d0, t)

    period = TWO_PI / rabi
    grid = np.linspace(0.0, 3 * period, 1201)
    traj = trajectory(ground, atom, d0, grid)
    B, b = build_bloch_generator(atom, d0)
    slope = (traj.states @ B.T + b)[:, 1]
    sy = traj.sy

    turns = np.flatnonzero((slope[:-1] > 0) & (slope[1:] <= 0))
    if turns.size == 0:
        raise CalibrationError("no maximum of sy within three Rabi periods")
    k = turns[0]
    t_half = _bisect(lambda t: _sy_rate(atom, d0, state(t)), grid[k], grid[k + 1])

    after = np.flatnonzero((grid[:-1] >= grid[k]) & (sy[:-1] > 0) & (sy[1:] <= 0))
    if after.size == 0:
        raise CalibrationError("sy never returns to zero after its first maximum")
    j = after[0]
    lo = max(grid[j], t_half)
    t_pi = _bisect(lambda t: state(t).sy, lo, grid[j + 1])
    return t_half, t_pi


@dataclass
class RabiTable:
    """Single-pulse sweep: readout right after a P pulse of each length."""

    dt_p: np.ndarray
    states: np.ndarray
    sigma_minus: np.ndarray
    i_avg: np.ndarray
    p_avg: np.ndarray

    @property
    def sigma_z(self):
        return self.states[:, 2]


def rabi_experiment(atom: AtomParams, drive: DriveField, dt_p_grid,
                    dt_r: float = DEFAULT_DT_R, t_rep: float = DEFAULT_T_REP,
                    finite_window: bool = False) -> RabiTable:
    lengths = np.asarray(dt_p_grid, dtype=float)
    if lengths.ndim != 1 or lengths.size == 0 or np.any(lengths < 0):
        raise ParameterError("pulse-length grid must be a non-empty list of non-negative times")
    records = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for dtp in lengths:
            seq = [Pulse(0.0, float(dtp), drive, "P")]
            cfg = ReadoutConfig(t_r=float(dtp), dt_r=dt_r, t_rep=t_rep)
            records.append(run_sequence(seq, cfg, atom, finite_window))
    return RabiTable(
        dt_p=lengths,
        states=np.array([r.state.array for r in records]),
        sigma_minus=np.array([r.sigma_minus for r in records]),
        i_avg=np.array([r.i_avg for r in records]),
        p_avg=np.array([r.p_avg for r in records]),
    )


def _sy_after(seq, atom, t_r):
    return evolve_sequence(seq, atom, t_r).sy


def t2_experiment(atom: AtomParams, drive: DriveField, delays) -> DecayTrace:
    """Pi/2 P pulse, free decay for each delay, then readout of ``sy``."""
    t_half, _ = calibrate_pulses(atom, drive)
    delays = np.asarray(delays, dtype=float)
    seq = [Pulse(0.0, t_half, drive, "P")]
    values = [_sy_after(seq, atom, t_half + d) for d in delays]
    return DecayTrace(delays, values)


def t1_experiment(atom: AtomParams, drive: DriveField, delays) -> DecayTrace:
    """Pi P pulse, delay, then a pi/2 M pulse (phase shifted by pi) mapping ``sz`` onto ``sy``."""
    t_half, t_pi = calibrate_pulses(atom, drive)
    delays = np.asarray(delays, dtype=float)
    m_drive = DriveField(drive.rabi, drive.phase + math.pi)
    values = []
    for d in delays:
        seq = [
            Pulse(0.0, t_pi, drive, "P"),
            Pulse(t_pi + d, t_half, m_drive, "M"),
        ]
        values.append(_sy_after(seq, atom, t_pi + d + t_half))
    return DecayTrace(delays, values)
