"""Optical Bloch dynamics of a resonantly driven two-level atom.

The pseudo-spin ``s = (<sx>, <sy>, <sz>)`` obeys the affine linear system

    ds/dt = B s + b,

    B = [[-G2,          0,           -W sin(phi)],
         [  0,        -G2,           -W cos(phi)],
         [W sin(phi),  W cos(phi),   -G1        ]],     b = (0, 0, -G1)

in the frame rotating at the atomic transition frequency, with relaxation
rate ``G1``, dephasing rate ``G2`` and Rabi frequency ``W``. All rates are
angular (rad/s) and all times are seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .errors import DegenerateSystemError, GridError, ParameterError
from .units import HBAR, TWO_PI, ghz_to_angular, mhz_to_angular

NORM_TOL = 1e-9

# Eigen-route guards: below this relative eigenvalue gap, or above this
# eigenvector condition number, the exponential falls back to scaling-and-squaring.
_EIG_GAP_TOL = 1e-8
_EIG_COND_MAX = 1e6

# Relative shortfall of gamma2 below gamma1/2 accepted as measurement scatter
# (the measured device has gamma2/2pi = 9.1 MHz against gamma1/4pi = 9.15 MHz).
DEPHASING_SLACK = 0.05

# Fixed RK4 step as a fraction of the fastest timescale.
RK_STEPS_PER_TIMESCALE = 2000


@dataclass(frozen=True)
class AtomParams:
    """Constants of the artificial atom and the line it radiates into.

    Parameters
    ----------
    omega_a : float
        Transition frequency (rad/s).
    gamma1, gamma2 : float
        Relaxation and dephasing rates (rad/s). ``gamma2 >= gamma1 / 2`` up to
        ``DEPHASING_SLACK``.
    phi_p : float
        Dipole transition matrix element (Wb).
    z_line : float
        Characteristic impedance of the transmission line (Ohm).
    persistent_current, mutual_inductance : float, optional
        Loop current (A) and loop-line mutual inductance (H). When both are
        given, ``phi_p`` must equal their product.
    """

    omega_a: float
    gamma1: float
    gamma2: float
    phi_p: float
    z_line: float = 50.0
    persistent_current: float | None = None
    mutual_inductance: float | None = None

    def __post_init__(self):
        for name in ("omega_a", "gamma1", "gamma2", "phi_p", "z_line"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value}")
        if self.omega_a <= 0:
            raise ParameterError(f"omega_a must be positive, got {self.omega_a}")
        if self.z_line <= 0:
            raise ParameterError(f"z_line must be positive, got {self.z_line}")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ParameterError(
                f"rates must be non-negative, got gamma1={self.gamma1}, gamma2={self.gamma2}"
            )
        if self.gamma2 < 0.5 * self.gamma1 * (1.0 - DEPHASING_SLACK):
            raise ParameterError(
                "gamma2 must be at least gamma1/2 (pure dephasing >= 0) "
                f"within {DEPHASING_SLACK:.0%}, "
                f"got gamma1={self.gamma1}, gamma2={self.gamma2}"
            )
        if self.phi_p < 0:
            raise ParameterError(f"phi_p must be non-negative, got {self.phi_p}")
        ip, m = self.persistent_current, self.mutual_inductance
        if ip is not None and m is not None:
            if not math.isclose(self.phi_p, m * ip, rel_tol=1e-12, abs_tol=0.0):
                raise ParameterError(
                    f"phi_p={self.phi_p} is inconsistent with M*Ip={m * ip}"
                )

    @classmethod
    def from_device(cls, omega_a, gamma1, gamma2, persistent_current,
                    mutual_inductance, z_line=50.0):
        """Build the atom with ``phi_p = M * Ip``."""
        return cls(
            omega_a=omega_a,
            gamma1=gamma1,
            gamma2=gamma2,
            phi_p=mutual_inductance * persistent_current,
            z_line=z_line,
            persistent_current=persistent_current,
            mutual_inductance=mutual_inductance,
        )

    @classmethod
    def from_lab_units(cls, omega_a_ghz=9.888, gamma1_mhz=18.3, gamma2_mhz=9.1,
                       persistent_current_na=213.0, mutual_inductance_ph=13.6,
                       z_line=50.0):
        """Atom from linear-frequency lab units (GHz, MHz, nA, pH)."""
        return cls.from_device(
            omega_a=ghz_to_angular(omega_a_ghz),
            gamma1=mhz_to_angular(gamma1_mhz),
            gamma2=mhz_to_angular(gamma2_mhz),
            persistent_current=persistent_current_na * 1e-9,
            mutual_inductance=mutual_inductance_ph * 1e-12,
            z_line=z_line,
        )

    @classmethod
    def measured(cls, **overrides):
        """The measured flux-qubit device; keyword overrides in lab units."""
        return cls.from_lab_units(**overrides)

    @property
    def pure_dephasing(self):
        return self.gamma2 - 0.5 * self.gamma1

    def with_rates(self, gamma1=None, gamma2=None):
        return replace(
            self,
            gamma1=self.gamma1 if gamma1 is None else gamma1,
            gamma2=self.gamma2 if gamma2 is None else gamma2,
        )

    def radiative_gamma1(self):
        """Relaxation rate implied by the line coupling, ``omega_a phi_p^2 / (hbar Z)``."""
        return self.omega_a * self.phi_p ** 2 / (HBAR * self.z_line)


@dataclass(frozen=True)
class DriveField:
    """Resonant drive with Rabi frequency ``rabi`` (rad/s) and phase (rad).

    ``rabi == 0`` means free evolution. The phase is wrapped into [0, 2*pi).
    """

    rabi: float
    phase: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.rabi) and math.isfinite(self.phase)):
            raise ParameterError("drive parameters must be finite")
        if self.rabi < 0:
            raise ParameterError(f"rabi must be non-negative, got {self.rabi}")
        object.__setattr__(self, "phase", float(self.phase) % TWO_PI)

    @classmethod
    def from_mhz(cls, rabi_mhz, phase=0.0):
        return cls(mhz_to_angular(rabi_mhz), phase)

    @classmethod
    def off(cls):
        return cls(0.0, 0.0)


@dataclass(frozen=True)
class BlochVector:
    sx: float
    sy: float
    sz: float

    def __post_init__(self):
        arr = np.array([self.sx, self.sy, self.sz], dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ParameterError(f"Bloch vector must be finite, got {arr}")
        norm = float(np.linalg.norm(arr))
        if norm > 1.0 + NORM_TOL:
            raise ParameterError(f"Bloch vector norm {norm!r} exceeds 1")

    @classmethod
    def from_array(cls, arr):
        sx, sy, sz = (float(v) for v in np.asarray(arr, dtype=float).reshape(3))
        return cls(sx, sy, sz)

    @classmethod
    def ground(cls):
        return cls(0.0, 0.0, -1.0)

    @classmethod
    def excited(cls):
        return cls(0.0, 0.0, 1.0)

    @property
    def array(self):
        return np.array([self.sx, self.sy, self.sz])

    @property
    def norm(self):
        return float(np.linalg.norm(self.array))

    def clamped(self):
        """Copy rescaled onto the unit ball; used for presentation only."""
        n = self.norm
        if n <= 1.0:
            return self
        return BlochVector.from_array(self.array / n)

    def __iter__(self):
        return iter((self.sx, self.sy, self.sz))


def as_bloch(state) -> BlochVector:
    if isinstance(state, BlochVector):
        return state
    return BlochVector.from_array(state)


@dataclass
class BlochTrajectory:
    """Sampled pseudo-spin evolution; ``states`` has shape ``(len(t_grid), 3)``."""

    t_grid: np.ndarray
    states: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.t_grid = check_grid(self.t_grid)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape != (len(self.t_grid), 3):
            raise GridError(
                f"states shape {self.states.shape} does not match grid length {len(self.t_grid)}"
            )

    def __len__(self):
        return len(self.t_grid)

    def __getitem__(self, i) -> BlochVector:
        return BlochVector.from_array(self.states[i])

    @property
    def sx(self):
        return self.states[:, 0]

    @property
    def sy(self):
        return self.states[:, 1]

    @property
    def sz(self):
        return self.states[:, 2]


def check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise GridError("time grid must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(t)):
        raise GridError("time grid contains non-finite values")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise GridError("time grid must be strictly increasing")
    return t


def build_bloch_generator(atom: AtomParams, drive: DriveField):
    """Return the Bloch matrix ``B`` (3x3) and the pumping vector ``b``."""
    g1, g2 = atom.gamma1, atom.gamma2
    if g1 < 0 or g2 < 0:
        raise ParameterError("rates must be non-negative")
    ws = drive.rabi * math.sin(drive.phase)
    wc = drive.rabi * math.cos(drive.phase)
    B = np.array([
        [-g2, 0.0, -ws],
        [0.0, -g2, -wc],
        [ws, wc, -g1],
    ])
    b = np.array([0.0, 0.0, -g1])
    return B, b


def generator_eigenvalues(atom: AtomParams, drive: DriveField) -> np.ndarray:
    B, _ = build_bloch_generator(atom, drive)
    return np.linalg.eigvals(B)


def steady_state(atom: AtomParams, drive: DriveField) -> BlochVector:
    """Fixed point of the driven, damped Bloch equations.

    For ``phase = 0`` the solution is ``(0, G1 W / (G1 G2 + W^2), -G1 G2 / (G1 G2 + W^2))``.
    """
    return BlochVector.from_array(_steady_state_array(atom, drive))


def _steady_state_array(atom, drive):
    B, b = build_bloch_generator(atom, drive)
    scale = max(atom.gamma1, atom.gamma2, drive.rabi)
    if scale == 0.0 or atom.gamma1 == 0.0:
        raise DegenerateSystemError(
            "steady state undefined without relaxation (gamma1 = 0)"
        )
    # Solve in units of the largest rate to keep the pivots O(1).
    Bn = B / scale
    if abs(np.linalg.det(Bn)) < 1e-14:
        raise DegenerateSystemError("Bloch generator is singular")
    return np.linalg.solve(Bn, -b / scale)


def _eigensystem(B):
    lam, V = np.linalg.eig(B)
    scale = float(np.max(np.abs(lam)))
    if scale == 0.0:
        return None
    gaps = [abs(lam[i] - lam[j]) for i in range(3) for j in range(i + 1, 3)]
    if min(gaps) < _EIG_GAP_TOL * scale:
        return None
    if np.linalg.cond(V) > _EIG_COND_MAX:
        return None
    return lam, V, np.linalg.inv(V)


def expm_stack(B, times) -> np.ndarray:
    """``exp(B t)`` for every ``t`` in ``times``; shape ``(n, 3, 3)``.

    Uses the eigendecomposition of ``B`` (complex-conjugate pairs are handled
    by taking the real part of the recombined product) and falls back to
    scaling-and-squaring when the spectrum is nearly degenerate.
    """
    t = np.atleast_1d(np.asarray(times, dtype=float))
    eig = _eigensystem(B)
    if eig is None:
        return np.array([expm(B * ti) for ti in t])
    lam, V, Vinv = eig
    phases = np.exp(np.outer(t, lam))  # (n, 3)
    out = np.einsum("ik,nk,kj->nij", V, phases, Vinv)
    if np.isrealobj(B):
        out = out.real
    return out


def _affine_evolve(s0, atom, drive, times):
    """Exact solution of ds/dt = B s + b for each time; shape ``(n, 3)``."""
    B, _ = build_bloch_generator(atom, drive)
    s0 = np.asarray(s0, dtype=float)
    E = expm_stack(B, times)
    if atom.gamma1 == 0.0:
        # b vanishes, the system is linear.
        return E @ s0
    ss = _steady_state_array(atom, drive)
    return E @ (s0 - ss) + ss


def _to_state(arr, atom) -> BlochVector:
    """Wrap a propagated array; under the tolerated ``G2 < G1/2`` rates the
    evolution is not contractive, so the result is projected onto the unit ball."""
    arr = np.asarray(arr, dtype=float)
    if atom.gamma2 < 0.5 * atom.gamma1:
        n = float(np.linalg.norm(arr))
        if n > 1.0:
            arr = arr / n
    return BlochVector.from_array(arr)


def propagate_exact(state, atom: AtomParams, drive: DriveField, duration: float) -> BlochVector:
    """Exact propagation ``exp(B t)(s - s_ss) + s_ss`` over ``duration`` seconds."""
    state = as_bloch(state)
    if not duration >= 0:
        raise ParameterError(f"duration must be non-negative, got {duration}")
    if duration == 0:
        return state
    return _to_state(_affine_evolve(state.array, atom, drive, [duration])[0], atom)


def default_rk_step(atom: AtomParams, drive: DriveField) -> float:
    """Fixed RK4 step: the fastest timescale split into ``RK_STEPS_PER_TIMESCALE`` steps."""
    scales = []
    if drive.rabi > 0:
        scales.append(TWO_PI / drive.rabi)
    if atom.gamma2 > 0:
        scales.append(1.0 / atom.gamma2)
    if atom.gamma1 > 0:
        scales.append(1.0 / atom.gamma1)
    if not scales:
        return math.inf
    return min(scales) / RK_STEPS_PER_TIMESCALE


def _rk_step_cap(atom, drive):
    caps = []
    if drive.rabi > 0:
        caps.append(0.02 * TWO_PI / drive.rabi)
    if atom.gamma2 > 0:
        caps.append(0.02 / atom.gamma2)
    return min(caps) if caps else math.inf


def propagate_rk(state, atom: AtomParams, drive: DriveField, duration: float,
                 dt: float | None = None) -> BlochVector:
    """Classical fixed-step RK4 integration of the Bloch equations.

    ``dt`` is clamped to ``min(0.02 * 2pi / W, 0.02 / G2)`` and to ``duration``;
    the step is then shrunk slightly so an integer number of steps covers
    ``duration``. For a constant generator every RK4 step is the same 4x4
    matrix acting on the augmented state ``(s, 1)``, so the n-step map is
    formed by repeated squaring of that matrix.
    """
    state = as_bloch(state)
    if not duration >= 0:
        raise ParameterError(f"duration must be non-negative, got {duration}")
    if dt is not None and not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if duration == 0:
        return state
    h = default_rk_step(atom, drive) if dt is None else dt
    h = min(h, _rk_step_cap(atom, drive), duration)
    n = max(1, math.ceil(duration / h - 1e-9))
    h = duration / n

    B, b = build_bloch_generator(atom, drive)
    A = np.zeros((4, 4))
    A[:3, :3] = B
    A[:3, 3] = b
    Y = np.eye(4)
    k1 = A @ Y
    k2 = A @ (Y + 0.5 * h * k1)
    k3 = A @ (Y + 0.5 * h * k2)
    k4 = A @ (Y + h * k3)
    step = Y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    total = np.linalg.matrix_power(step, n)
    out = total @ np.append(state.array, 1.0)
    return _to_state(out[:3], atom)


def trajectory(state0, atom: AtomParams, drive: DriveField, t_grid: Sequence[float]) -> BlochTrajectory:
    """Sample one constant-drive segment at ``t_grid`` (times relative to ``t_grid[0]``)."""
    t = check_grid(t_grid)
    s0 = as_bloch(state0).array
    states = _affine_evolve(s0, atom, drive, t - t[0])
    states[0] = s0
    if atom.gamma2 < 0.5 * atom.gamma1:
        norms = np.linalg.norm(states, axis=1)
        over = norms > 1.0
        states[over] /= norms[over, None]
    return BlochTrajectory(t, states)


def rotate_z(state, angle: float) -> BlochVector:
    """Active rotation of a Bloch vector by ``angle`` about the z axis."""
    c, s = math.cos(angle), math.sin(angle)
    R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return BlochVector.from_array(R @ as_bloch(state).array)
