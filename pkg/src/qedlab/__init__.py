"""Driven two-level atom in a 1D transmission line: Bloch dynamics, pulse
experiments, regression correlations, fluorescence spectra and fits."""

from .dynamics import (
    AtomParams,
    BlochTrajectory,
    BlochVector,
    DriveField,
    build_bloch_generator,
    propagate_exact,
    propagate_rk,
    rotate_z,
    steady_state,
    trajectory,
)
from .errors import (
    CalibrationError,
    DegenerateSystemError,
    GridError,
    ParameterError,
    QedlabError,
    SequenceError,
    TruncationError,
)
from .inference import (
    DecayTrace,
    FitResult,
    add_noise,
    fit_damped_oscillation,
    fit_exponential,
    fit_lorentzian,
)
from .pulses import (
    Pulse,
    ReadoutConfig,
    ReadoutRecord,
    calibrate_pulses,
    coherent_current,
    emitted_power,
    rabi_experiment,
    readout_average,
    run_sequence,
    t1_experiment,
    t2_experiment,
)
from .spectrum import (
    CorrelationTrace,
    Spectrum,
    analytic_triplet,
    correlation_direct,
    correlation_via_differencing,
    free_induction_spectrum,
    incoherent_spectrum,
)

__version__ = "0.1.0"

__all__ = [
    "AtomParams",
    "BlochTrajectory",
    "BlochVector",
    "DriveField",
    "build_bloch_generator",
    "propagate_exact",
    "propagate_rk",
    "rotate_z",
    "steady_state",
    "trajectory",
    "CalibrationError",
    "DegenerateSystemError",
    "GridError",
    "ParameterError",
    "QedlabError",
    "SequenceError",
    "TruncationError",
    "DecayTrace",
    "FitResult",
    "add_noise",
    "fit_damped_oscillation",
    "fit_exponential",
    "fit_lorentzian",
    "Pulse",
    "ReadoutConfig",
    "ReadoutRecord",
    "calibrate_pulses",
    "coherent_current",
    "emitted_power",
    "rabi_experiment",
    "readout_average",
    "run_sequence",
    "t1_experiment",
    "t2_experiment",
    "CorrelationTrace",
    "Spectrum",
    "analytic_triplet",
    "correlation_direct",
    "correlation_via_differencing",
    "free_induction_spectrum",
    "incoherent_spectrum",
]
