"""Least-squares extraction of rates and line shapes from traces and spectra.

Three models, each fitted by Levenberg-Marquardt with an analytic Jacobian
after a deterministic initialization:

=====================  ========================================  =====================
model                  formula                                   initialization
=====================  ========================================  =====================
exponential            A exp(-r t) + c                           log-linear regression
damped oscillation     A exp(-l t) sin(w t + theta) + c          dominant DFT bin
Lorentzian             h w^2 / ((f - f0)^2 + w^2) + c            maximum bin
=====================  ========================================  =====================

Fits run on rescaled abscissa and ordinate (both brought to O(1)) and the
parameters are mapped back afterwards, so results are equivariant under
rescaling of time and signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from .errors import GridError, ParameterError
from .spectrum import Spectrum
from .units import TWO_PI

MAX_ITERATIONS = 200
STEP_TOL = 1e-10
# Dominant DFT bin must exceed the median bin power by this factor.
PEAK_TO_FLOOR = 10.0


@dataclass
class DecayTrace:
    """Signal samples versus delay (s). ``sigma`` optionally weights each point."""

    delays: np.ndarray
    values: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.delays.ndim != 1 or self.delays.shape != self.values.shape:
            raise GridError("delays and values must be 1-D arrays of equal length")
        if self.delays.size > 1 and np.any(np.diff(self.delays) <= 0):
            raise GridError("delays must be strictly increasing")
        if self.sigma is not None:
            self.sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), self.values.shape).copy()
            if np.any(self.sigma <= 0):
                raise ParameterError("per-point sigma must be positive")

    def __len__(self):
        return len(self.delays)


@dataclass
class FitResult:
    """Outcome of one fit.

    ``params`` holds SI values (rates in rad/s, frequencies in Hz) together
    with linear-MHz copies suffixed ``_mhz``; ``units`` names the unit of
    every entry. ``residual_rms`` is the RMS residual divided by the largest
    absolute data value. ``covariance`` refers to ``model_params`` in order.
    """

    model: str
    params: dict
    units: dict
    model_params: tuple
    residual_rms: float
    converged: bool
    iterations: int
    covariance: np.ndarray | None = None
    message: str = ""
    stderr: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.params[name]

    def report(self):
        """JSON-ready summary restricted to linear units (no rad/s or Hz entries)."""
        hidden = {"rad/s", "Hz"}
        keep = [k for k in self.params if self.units.get(k) not in hidden]
        return {
            "model": self.model,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "residual_rms": _clean(self.residual_rms),
            "message": self.message,
            "params": {k: {"value": _clean(self.params[k]), "unit": self.units[k],
                           "stderr": _clean(self.stderr.get(k))} for k in keep},
        }


def _clean(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _stderr(cov):
    # a negative diagonal means the curvature estimate is unusable
    d = np.diag(cov)
    return np.where(d >= 0, np.sqrt(np.abs(d)), math.nan)


def _failed(model, names, message):
    return FitResult(
        model=model,
        params={n: math.nan for n in names},
        units={n: "" for n in names},
        model_params=tuple(names),
        residual_rms=math.nan,
        converged=False,
        iterations=0,
        message=message,
    )


def _solve(fun, jac, p0, weights):
    """Weighted Levenberg-Marquardt; returns (params, covariance, nfev, ok, message)."""
    def res(p):
        return fun(p) * weights

    def jw(p):
        return jac(p) * weights[:, None]

    out = least_squares(
        res, np.asarray(p0, dtype=float), jac=jw, method="lm",
        xtol=STEP_TOL, ftol=1e-15, gtol=1e-15, max_nfev=MAX_ITERATIONS,
    )
    p = out.x
    J = out.jac
    dof = max(len(out.fun) - len(p), 1)
    s2 = float(out.fun @ out.fun) / dof
    try:
        cov = np.linalg.inv(J.T @ J) * s2
    except np.linalg.LinAlgError:
        cov = None
    ok = bool(out.success) and np.all(np.isfinite(p))
    return p, cov, int(out.nfev), ok, out.message


def _scales(x, y):
    xs = float(np.max(np.abs(x)))
    ys = float(np.max(np.abs(y)))
    return (xs if xs > 0 else 1.0), (ys if ys > 0 else 1.0)


def _weights(trace_sigma, y_scale, n):
    if trace_sigma is None:
        return np.ones(n)
    return y_scale / trace_sigma


# --- exponential -----------------------------------------------------------

def _loglinear_start(t, y):
    n = len(y)
    tail = max(1, n // 10)
    c0 = float(np.mean(y[-tail:]))
    d = y - c0
    dmax = float(np.max(np.abs(d)))
    if dmax == 0.0:
        return None
    sign = 1.0 if d[np.argmax(np.abs(d[: max(2, n // 4)]))] >= 0 else -1.0
    keep = sign * d > 0.05 * dmax
    if np.count_nonzero(keep) < 2:
        return None
    tk, dk = t[keep], sign * d[keep]
    # log-domain regression weighted by the signal squared
    w = dk ** 2
    slope, intercept = np.polyfit(tk, np.log(dk), 1, w=np.sqrt(w))
    rate = -slope
    if not rate > 0:
        rate = 1.0 / max(t[-1] - t[0], 1e-300)
    return np.array([sign * math.exp(intercept), rate, c0])


def fit_exponential(trace: DecayTrace) -> FitResult:
    """Fit ``A exp(-r t) + c`` and report ``r`` in rad/s and as ``r/2pi`` in MHz."""
    names = ("amplitude", "rate", "offset")
    if len(trace) < 4:
        raise ParameterError("exponential fit needs at least 4 points")
    t_scale, y_scale = _scales(trace.delays, trace.values)
    t = trace.delays / t_scale
    y = trace.values / y_scale
    p0 = _loglinear_start(t, y)
    if p0 is None:
        return _failed("exponential", names, "no decaying component above the baseline")

    def model(p):
        return p[0] * np.exp(-p[1] * t) + p[2]

    def fun(p):
        return model(p) - y

    def jac(p):
        e = np.exp(-p[1] * t)
        return np.column_stack([e, -p[0] * t * e, np.ones_like(t)])

    w = _weights(trace.sigma, y_scale, len(t))
    p, cov, nfev, ok, msg = _solve(fun, jac, p0, w)
    a, r, c = p[0] * y_scale, p[1] / t_scale, p[2] * y_scale
    message = "" if ok else str(msg)
    if not r > 0:
        ok = False
        message = f"fitted rate {r:.4g} is not a decay"
    rms = float(np.sqrt(np.mean(fun(p) ** 2)))
    scale = np.array([y_scale, 1.0 / t_scale, y_scale])
    cov_si = None if cov is None else cov * np.outer(scale, scale)
    se = _stderr(cov_si) if cov_si is not None else [math.nan] * 3
    return FitResult(
        model="exponential",
        params={"amplitude": a, "rate": r, "rate_mhz": r / TWO_PI / 1e6, "offset": c,
                "lifetime_ns": 1e9 / r if r > 0 else math.nan},
        units={"amplitude": "1", "rate": "rad/s", "rate_mhz": "MHz", "offset": "1",
               "lifetime_ns": "ns"},
        model_params=names,
        residual_rms=rms,
        converged=ok,
        iterations=nfev,
        covariance=cov_si,
        message=message,
        stderr={"amplitude": se[0], "rate": se[1], "rate_mhz": se[1] / TWO_PI / 1e6,
                "offset": se[2]},
    )


# --- damped oscillation ----------------------------------------------------

def dominant_frequency(t, y, pad=8):
    """Angular frequency of the largest non-DC bin of the (non-uniform) DFT, and its peak-to-floor ratio."""
    t = np.asarray(t, dtype=float)
    yc = np.asarray(y, dtype=float) - np.mean(y)
    span = t[-1] - t[0]
    dt = float(np.median(np.diff(t)))
    n_bins = pad * len(t) // 2
    omegas = np.linspace(0.0, math.pi / dt, n_bins + 1)[1:]
    power = np.abs(np.exp(-1j * np.outer(omegas, t - t[0])) @ yc) ** 2
    # skip bins below one cycle over the record
    usable = omegas >= TWO_PI / span
    if not np.any(usable):
        return None, 0.0
    idx = np.flatnonzero(usable)
    k = idx[np.argmax(power[idx])]
    floor = float(np.median(power[idx]))
    ratio = float(power[k] / floor) if floor > 0 else math.inf
    w = omegas[k]
    if 0 < k < len(omegas) - 1:
        a, b, c = power[k - 1], power[k], power[k + 1]
        denom = a - 2 * b + c
        if denom != 0:
            w += 0.5 * (a - c) / denom * (omegas[1] - omegas[0])
    return w, ratio


def _linear_amplitudes(t, y, w, lam):
    e = np.exp(-lam * t)
    M = np.column_stack([e * np.sin(w * t), e * np.cos(w * t), np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    r = M @ coef - y
    return coef, float(r @ r)


def fit_damped_oscillation(trace: DecayTrace) -> FitResult:
    """Fit ``A exp(-l t) sin(w t + theta) + c``; ``w`` is the damped Rabi frequency."""
    names = ("amplitude", "frequency", "decay", "phase", "offset")
    if len(trace) < 8:
        raise ParameterError("damped-oscillation fit needs at least 8 points")
    t_scale, y_scale = _scales(trace.delays, trace.values)
    t = trace.delays / t_scale
    y = trace.values / y_scale
    w0, ratio = dominant_frequency(t, y)
    if w0 is None or ratio < PEAK_TO_FLOOR:
        return _failed("damped_oscillation", names, "no spectral peak above the noise floor")
    span = t[-1] - t[0]
    if w0 * span / TWO_PI < 2.0:
        return _failed("damped_oscillation", names, "fewer than two periods in the record")

    best = None
    for lam in [0.0] + [w0 * f for f in (1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0)]:
        coef, cost = _linear_amplitudes(t, y, w0, lam)
        if best is None or cost < best[0]:
            best = (cost, lam, coef)
    _, lam0, (a_s, a_c, c0) = best
    p0 = np.array([math.hypot(a_s, a_c), w0, lam0, math.atan2(a_c, a_s), c0])

    def fun(p):
        return p[0] * np.exp(-p[2] * t) * np.sin(p[1] * t + p[3]) + p[4] - y

    def jac(p):
        e = np.exp(-p[2] * t)
        s = np.sin(p[1] * t + p[3])
        c = np.cos(p[1] * t + p[3])
        return np.column_stack([
            e * s,
            p[0] * e * t * c,
            -p[0] * t * e * s,
            p[0] * e * c,
            np.ones_like(t),
        ])

    w = _weights(trace.sigma, y_scale, len(t))
    p, cov, nfev, ok, msg = _solve(fun, jac, p0, w)
    amp, freq, decay, phase, off = p
    if freq < 0:
        # A sin(-w t + th) = -A sin(w t - th)
        freq, phase, amp = -freq, -phase, -amp
    if amp < 0:
        amp, phase = -amp, phase + math.pi
    phase = (phase + math.pi) % TWO_PI - math.pi
    message = "" if ok else str(msg)
    if decay < 0:
        if -decay <= 1e-9 * freq:
            decay = 0.0
        else:
            ok = False
            message = f"fitted envelope grows (decay {decay:.4g})"
    rms = float(np.sqrt(np.mean(fun(p) ** 2)))
    scale = np.array([y_scale, 1.0 / t_scale, 1.0 / t_scale, 1.0, y_scale])
    cov_si = None if cov is None else cov * np.outer(scale, scale)
    se = _stderr(cov_si) if cov_si is not None else [math.nan] * 5
    freq_si, decay_si = freq / t_scale, decay / t_scale
    return FitResult(
        model="damped_oscillation",
        params={
            "amplitude": amp * y_scale,
            "frequency": freq_si,
            "frequency_mhz": freq_si / TWO_PI / 1e6,
            "decay": decay_si,
            "decay_mhz": decay_si / TWO_PI / 1e6,
            "phase": phase,
            "offset": off * y_scale,
        },
        units={"amplitude": "1", "frequency": "rad/s", "frequency_mhz": "MHz",
               "decay": "rad/s", "decay_mhz": "MHz", "phase": "rad", "offset": "1"},
        model_params=names,
        residual_rms=rms,
        converged=ok,
        iterations=nfev,
        covariance=cov_si,
        message=message,
        stderr={"amplitude": se[0], "frequency": se[1], "frequency_mhz": se[1] / TWO_PI / 1e6,
                "decay": se[2], "decay_mhz": se[2] / TWO_PI / 1e6, "phase": se[3],
                "offset": se[4]},
    )


# --- Lorentzian -------------------------------------------------------------

def fit_lorentzian(spec: Spectrum, window: float | None = None) -> FitResult:
    """Fit ``h w^2 / ((f - f0)^2 + w^2) + c`` to a spectrum; ``w`` is the HWHM.

    ``window`` restricts the fit to ``|detuning| <= window`` (Hz).
    """
    names = ("center", "hwhm", "height", "offset")
    if window is not None:
        spec = spec.window(window)
    f, y = spec.detuning_grid, spec.density
    if len(f) < 8:
        raise ParameterError("Lorentzian fit needs at least 8 points")
    if np.any(np.diff(f) <= 0):
        raise GridError("spectrum grid must be strictly increasing")
    f_scale, y_scale = _scales(f, y)
    x = f / f_scale
    yy = y / y_scale
    k = int(np.argmax(yy))
    edge = max(1, len(yy) // 10)
    c0 = float(np.median(np.concatenate([yy[:edge], yy[-edge:]])))
    h0 = float(yy[k] - c0)
    if h0 <= 0 or k in (0, len(yy) - 1):
        return _failed("lorentzian", names, "data are not peaked")
    above = yy - c0 > 0.5 * h0
    lo = k
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = k
    while hi < len(yy) - 1 and above[hi + 1]:
        hi += 1
    w0 = max(0.5 * (x[hi] - x[lo]), 0.5 * float(np.min(np.diff(x))))
    p0 = np.array([x[k], w0, h0, c0])

    def fun(p):
        return p[2] * p[1] ** 2 / ((x - p[0]) ** 2 + p[1] ** 2) + p[3] - yy

    def jac(p):
        d = x - p[0]
        q = d ** 2 + p[1] ** 2
        return np.column_stack([
            2 * p[2] * p[1] ** 2 * d / q ** 2,
            2 * p[2] * p[1] * d ** 2 / q ** 2,
            p[1] ** 2 / q,
            np.ones_like(x),
        ])

    p, cov, nfev, ok, msg = _solve(fun, jac, p0, np.ones(len(x)))
    center, hw, height, off = p
    hw = abs(hw)
    message = "" if ok else str(msg)
    span = f[-1] - f[0]
    if not height > 0:
        ok, message = False, "fitted line has no positive height"
    elif span < 4 * hw * f_scale:
        ok, message = False, "spectrum spans fewer than 4 half-widths"
    rms = float(np.sqrt(np.mean(fun(p) ** 2)))
    scale = np.array([f_scale, f_scale, y_scale, y_scale])
    cov_si = None if cov is None else cov * np.outer(scale, scale)
    se = _stderr(cov_si) if cov_si is not None else [math.nan] * 4
    return FitResult(
        model="lorentzian",
        params={
            "center": center * f_scale,
            "center_mhz": center * f_scale / 1e6,
            "hwhm": hw * f_scale,
            "hwhm_mhz": hw * f_scale / 1e6,
            "height": height * y_scale,
            "offset": off * y_scale,
        },
        units={"center": "Hz", "center_mhz": "MHz", "hwhm": "Hz", "hwhm_mhz": "MHz",
               "height": "W/Hz", "offset": "W/Hz"},
        model_params=names,
        residual_rms=rms,
        converged=ok,
        iterations=nfev,
        covariance=cov_si,
        message=message,
        stderr={"center": se[0], "center_mhz": se[0] / 1e6, "hwhm": se[1],
                "hwhm_mhz": se[1] / 1e6, "height": se[2], "offset": se[3]},
    )


def add_noise(data, sigma: float, seed: int):
    """Add i.i.d. Gaussian noise of scale ``sigma`` from a generator seeded with ``seed``.

    Accepts a :class:`DecayTrace`, a :class:`Spectrum` or a plain array and
    returns the same type.
    """
    if not sigma >= 0:
        raise ParameterError(f"noise scale must be non-negative, got {sigma}")
    rng = np.random.default_rng(seed)
    if isinstance(data, DecayTrace):
        if sigma == 0:
            return replace(data, values=data.values.copy())
        return replace(data, values=data.values + rng.normal(0.0, sigma, data.values.shape))
    if isinstance(data, Spectrum):
        if sigma == 0:
            return replace(data, density=data.density.copy())
        return replace(data, density=data.density + rng.normal(0.0, sigma, data.density.shape))
    arr = np.asarray(data, dtype=float)
    if sigma == 0:
        return arr.copy()
    return arr + rng.normal(0.0, sigma, arr.shape)
