"""``qedlab`` command line: virtual experiments and fits, written as CSV or JSON.

Exit codes: 0 success, 2 configuration or parse error, 3 numerical failure
(non-converged fit, impossible calibration, truncated correlation).
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import inference, pulses, spectrum
from .config import ConfigError, load_config
from .errors import (
    CalibrationError,
    DegenerateSystemError,
    ParameterError,
    TruncationError,
)
from .tables import ParseError, Table, dumps_json, read_xy, write_tables
from .units import TWO_PI, angular_to_mhz, ns, to_ns

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

CONSISTENCY_TOL = 0.20

EPILOG = """\
exit codes:
  0  success
  2  configuration or input parse error
  3  numerical failure (fit did not converge, calibration impossible, ...)

configuration: flat 'key = value' file (see configs/device.cfg); every key can
be overridden with --set key=value. Frequencies are linear (MHz, GHz), times ns.
"""


def _atom_meta(cfg):
    return {
        "omega_a_GHz": cfg.omega_a_ghz,
        "gamma1_MHz": cfg.gamma1_mhz,
        "gamma2_MHz": cfg.gamma2_mhz,
    }


def _tag_mhz(value):
    return f"{value:g}MHz".replace(".", "p")


# --- rabi ------------------------------------------------------------------

def cmd_rabi(cfg):
    atom = cfg.atom()
    grid = np.linspace(0.0, ns(cfg.dt_p_max_ns), cfg.dt_p_points)
    tables = []
    for rabi_mhz, drive in zip(cfg.rabi_mhz, cfg.drives()):
        table = pulses.rabi_experiment(atom, drive, grid, dt_r=cfg.dt_r, t_rep=cfg.t_rep,
                                       finite_window=cfg.finite_window)
        meta = {**_atom_meta(cfg), "rabi_MHz": rabi_mhz, "phase_rad": cfg.phase_rad,
                "dt_r_ns": cfg.dt_r_ns, "t_rep_ns": cfg.t_rep_ns}
        try:
            t_half, t_pi = pulses.calibrate_pulses(atom, drive)
            meta["t_pi_2_ns"] = to_ns(t_half)
            meta["t_pi_ns"] = to_ns(t_pi)
        except CalibrationError:
            meta["t_pi_2_ns"] = math.nan
            meta["t_pi_ns"] = math.nan
        tables.append(Table(
            command="rabi",
            tag=f"rabi{_tag_mhz(rabi_mhz)}",
            columns=[("dt_p_ns", "ns"), ("sx", "1"), ("sy", "1"), ("sz", "1"),
                     ("re_sigma_minus", "1"), ("im_sigma_minus", "1"), ("p_avg_W", "W")],
            data={
                "dt_p_ns": to_ns(table.dt_p),
                "sx": table.states[:, 0],
                "sy": table.states[:, 1],
                "sz": table.states[:, 2],
                "re_sigma_minus": table.sigma_minus.real,
                "im_sigma_minus": table.sigma_minus.imag,
                "p_avg_W": table.p_avg,
            },
            meta=meta,
        ))
    return tables, []


# --- decay -----------------------------------------------------------------

def decay_trace(cfg, kind):
    """Synthetic T1 or T2 trace (noise included) for the first configured amplitude."""
    atom = cfg.atom()
    drive = cfg.drives()[0]
    rate = atom.gamma1 if kind == "t1" else atom.gamma2
    t_max = ns(cfg.delay_max_ns) if cfg.delay_max_ns is not None else 5.0 / rate
    delays = np.linspace(0.0, t_max, cfg.delay_points)
    run = pulses.t1_experiment if kind == "t1" else pulses.t2_experiment
    trace = run(atom, drive, delays)
    if cfg.noise_sigma > 0:
        trace = inference.add_noise(trace, cfg.noise_sigma, cfg.seed)
    return trace


def cmd_decay(cfg, kind):
    """Returns ``(tables, summary, converged)``; tables are written even if the fit failed."""
    trace = decay_trace(cfg, kind)
    fit = inference.fit_exponential(trace)
    expected = cfg.gamma1_mhz if kind == "t1" else cfg.gamma2_mhz
    meta = {**_atom_meta(cfg), "kind": kind, "rabi_MHz": cfg.rabi_mhz[0],
            "noise_sigma": cfg.noise_sigma, "seed": cfg.seed,
            "configured_rate_MHz": expected}
    table = Table(
        command="decay",
        tag=kind,
        columns=[("delay_ns", "ns"), ("signal", "1")],
        data={"delay_ns": to_ns(trace.delays), "signal": trace.values},
        meta=meta,
        fit=fit.report(),
    )
    summary = [f"{kind}: fitted rate {fit['rate_mhz']:.6g} MHz (configured {expected:g} MHz), "
               f"converged={fit.converged}"]
    if not fit.converged:
        summary.append(f"fit did not converge: {fit.message}")
    return [table], summary, fit.converged


# --- correlation -----------------------------------------------------------

def correlation_grid(cfg, atom, drive):
    if cfg.corr_dt_ns is None and cfg.corr_t_max_ns is None:
        return spectrum.default_correlation_grid(atom, drive)
    default = spectrum.default_correlation_grid(atom, drive)
    dt = ns(cfg.corr_dt_ns) if cfg.corr_dt_ns is not None else default[1]
    t_max = ns(cfg.corr_t_max_ns) if cfg.corr_t_max_ns is not None else default[-1]
    n = int(math.ceil(t_max / dt - 1e-9))
    return dt * np.arange(n + 1)


def _correlations(cfg, atom, drive, method):
    t = correlation_grid(cfg, atom, drive)
    direct = spectrum.correlation_direct(atom, drive, t, cfg.mode)
    run = spectrum.differencing_run(atom, drive, t)
    diff = run.correlation()
    chosen = direct if method == "direct" else diff
    if cfg.dead_time_mask:
        chosen = spectrum.apply_dead_time(chosen, atom, drive, ns(cfg.dead_time_ns), cfg.mode)
    return chosen, direct, diff, run


def cmd_correlation(cfg, method):
    atom = cfg.atom()
    drive = cfg.drives()[0]
    corr, direct, diff, run = _correlations(cfg, atom, drive, method)
    gap = float(np.max(np.abs(direct.values - diff.values)))
    meta = {**_atom_meta(cfg), "rabi_MHz": cfg.rabi_mhz[0], "method": method, "mode": cfg.mode,
            "max_method_difference": gap}
    columns = [("t_ns", "ns"), ("re_C", "1"), ("im_C", "1")]
    data = {"t_ns": to_ns(corr.t_grid), "re_C": corr.values.real, "im_C": corr.values.imag}
    if cfg.dead_time_mask:
        meta["dead_time_ns"] = cfg.dead_time_ns
        columns.append(("masked", "bool"))
        data["masked"] = corr.masked
    tables = [Table("correlation", f"correlation_{method}", columns, data, meta)]
    if method == "differencing":
        cols = [("t_ns", "ns")]
        tdata = {"t_ns": to_ns(run.t_grid)}
        for label, arr in (("xp", run.x_plus), ("xm", run.x_minus),
                           ("yp", run.y_plus), ("ym", run.y_minus)):
            for k, comp in enumerate(("sx", "sy", "sz")):
                name = f"{label}_{comp}"
                cols.append((name, "1"))
                tdata[name] = arr[:, k]
        tables.append(Table("correlation", "trajectories", cols, tdata,
                            {**_atom_meta(cfg), "rabi_MHz": cfg.rabi_mhz[0]}))
    summary = [f"max |C_direct - C_differencing| = {gap:.3e}"]
    return tables, summary


# --- spectrum --------------------------------------------------------------

def _lorentzian_line(atom, f):
    w = TWO_PI * f
    return spectrum.spectral_prefactor(atom) * atom.gamma2 / (atom.gamma2 ** 2 + w ** 2)


def cmd_spectrum(cfg, source, method="differencing"):
    atom = cfg.atom()
    summary = []
    if source == "mollow":
        drive = cfg.drives()[0]
        corr, *_ = _correlations(cfg, atom, drive, method)
        spec = spectrum.incoherent_spectrum(corr, atom, zero_pad=cfg.zero_pad)
        span = cfg.span_mhz if cfg.span_mhz is not None else \
            2.0 * cfg.rabi_mhz[0] + 20.0 * cfg.gamma2_mhz
        spec = spec.window(span * 1e6)
        oracle = spectrum.analytic_triplet(atom, drive, spec.detuning_grid, cfg.mode).density
        meta = {**_atom_meta(cfg), "rabi_MHz": cfg.rabi_mhz[0], "method": method}
    else:
        corr = spectrum.free_induction_correlation(atom, correlation_grid(cfg, atom, spectrum.DriveField.off()))
        spec = spectrum.incoherent_spectrum(corr, atom, zero_pad=cfg.zero_pad)
        span = cfg.span_mhz if cfg.span_mhz is not None else 20.0 * cfg.gamma2_mhz
        spec = spec.window(span * 1e6)
        oracle = _lorentzian_line(atom, spec.detuning_grid)
        meta = dict(_atom_meta(cfg))
        fit = inference.fit_lorentzian(spec)
        meta["fitted_hwhm_MHz"] = fit["hwhm_mhz"]
        summary.append(f"free-induction line: fitted HWHM {fit['hwhm_mhz']:.6g} MHz "
                       f"(gamma2 {cfg.gamma2_mhz:g} MHz)")
    density = spec.density
    unit = "W/Hz"
    if cfg.normalized:
        density = density / np.max(density)
        oracle = oracle / np.max(oracle)
        unit = "1"
    meta.update({"source": source, "normalized": cfg.normalized,
                 "bin_MHz": float(spec.detuning_grid[1] - spec.detuning_grid[0]) / 1e6})
    table = Table(
        command="spectrum",
        tag=source,
        columns=[("detuning_MHz", "MHz"), ("S", unit), ("S_analytic", unit)],
        data={"detuning_MHz": spec.detuning_grid / 1e6, "S": density, "S_analytic": oracle},
        meta=meta,
    )
    return [table], summary


# --- fit -------------------------------------------------------------------

FIT_MODELS = ("exponential", "damped_oscillation", "lorentzian")


def fit_file(path, model):
    """Fit ``x, y[, sigma]`` columns; x in ns for traces, MHz for spectra."""
    x, y, sigma = read_xy(path)
    if model == "lorentzian":
        return inference.fit_lorentzian(spectrum.Spectrum(x * 1e6, y))
    trace = inference.DecayTrace(ns(x), y, sigma)
    if model == "exponential":
        return inference.fit_exponential(trace)
    return inference.fit_damped_oscillation(trace)


def cmd_fit(path, model):
    return fit_file(path, model)


# --- consistency check -----------------------------------------------------

def consistency_report(cfg):
    atom = cfg.atom()
    g1_line = atom.radiative_gamma1()
    gap = (atom.gamma1 - g1_line) / atom.gamma1
    return {
        "phi_p_Wb": atom.phi_p,
        "gamma1_from_coupling_MHz": angular_to_mhz(g1_line),
        "gamma1_measured_MHz": cfg.gamma1_mhz,
        "relative_gap": gap,
        "tolerance": CONSISTENCY_TOL,
        "consistent": abs(gap) <= CONSISTENCY_TOL,
        "pure_dephasing_MHz": angular_to_mhz(atom.pure_dephasing),
    }


def cmd_check(cfg):
    rep = consistency_report(cfg)
    names = list(rep)
    table = Table(
        command="check",
        tag="consistency",
        columns=[("quantity", "-"), ("value", "-")],
        data={"quantity": names, "value": [rep[k] for k in names]},
    )
    summary = [
        f"gamma1 from M*Ip coupling: {rep['gamma1_from_coupling_MHz']:.4g} MHz vs measured "
        f"{rep['gamma1_measured_MHz']:g} MHz ({rep['relative_gap']:+.1%}, "
        f"{'within' if rep['consistent'] else 'outside'} {CONSISTENCY_TOL:.0%})"
    ]
    return [table], summary


# --- entry point -----------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="key=value configuration file")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        dest="overrides", help="override one configuration key (repeatable)")
    common.add_argument("--out", metavar="PATH", help="output file (stdout if omitted)")
    common.add_argument("--format", choices=("csv", "json"), help="output format")
    common.add_argument("--seed", type=int, help="noise seed")

    parser = argparse.ArgumentParser(
        prog="qedlab",
        description="Driven two-level atom in a 1D transmission line: pulse experiments, "
                    "correlation functions, resonance-fluorescence spectra and fits.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common_kw = {"parents": [common], "epilog": EPILOG,
                 "formatter_class": argparse.RawDescriptionHelpFormatter}
    sub.add_parser("rabi", **common_kw, help="single-pulse Rabi sweep (one file per amplitude)")
    p = sub.add_parser("decay", **common_kw, help="T1 or T2 pulse experiment with exponential fit")
    p.add_argument("--kind", choices=("t1", "t2"), required=True)
    p = sub.add_parser("correlation", **common_kw, help="two-time correlation of fluctuations")
    p.add_argument("--method", choices=("direct", "differencing"), default="differencing")
    p = sub.add_parser("spectrum", **common_kw, help="resonance-fluorescence or free-induction spectrum")
    p.add_argument("--source", choices=("mollow", "free_induction"), default="mollow")
    p.add_argument("--method", choices=("direct", "differencing"), default="differencing")
    p = sub.add_parser("fit", **common_kw, help="fit x,y[,sigma] columns from a CSV file")
    p.add_argument("input", help="CSV with x (ns, or MHz for lorentzian), y and optional sigma")
    p.add_argument("--model", choices=FIT_MODELS, required=True)
    sub.add_parser("check", **common_kw, help="coupling-strength consistency check")
    return parser


def _run(args, stdout, stderr):
    cfg = load_config(args.config, args.overrides, format=args.format, seed=args.seed)
    if args.command == "fit":
        try:
            fit = cmd_fit(args.input, args.model)
        except ParseError as exc:
            raise ConfigError(f"{args.input}: {exc}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read {args.input}: {exc}") from exc
        text = dumps_json(fit.report())
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        else:
            stdout.write(text)
        return EXIT_OK if fit.converged else EXIT_NUMERIC

    ok = True
    if args.command == "rabi":
        tables, summary = cmd_rabi(cfg)
    elif args.command == "decay":
        tables, summary, ok = cmd_decay(cfg, args.kind)
    elif args.command == "correlation":
        tables, summary = cmd_correlation(cfg, args.method)
    elif args.command == "spectrum":
        tables, summary = cmd_spectrum(cfg, args.source, args.method)
    else:
        tables, summary = cmd_check(cfg)
    write_tables(tables, args.out, cfg.format, stdout)
    for line in summary:
        print(line, file=stderr)
    return EXIT_OK if ok else EXIT_NUMERIC


def main(argv=None, stdout=None, stderr=None):
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return _run(args, stdout, stderr)
    except (ConfigError, ParameterError) as exc:
        print(f"qedlab: error: {exc}", file=stderr)
        return EXIT_CONFIG
    except (CalibrationError, TruncationError, DegenerateSystemError) as exc:
        print(f"qedlab: numerical failure: {exc}", file=stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
