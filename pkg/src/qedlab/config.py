"""Flat ``key = value`` run configuration in lab units (GHz, MHz, ns, nA, pH)."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .dynamics import AtomParams, DriveField
from .errors import QedlabError
from .units import mhz_to_angular, ns

FORMATS = ("csv", "json")
MODES = ("strong_drive", "general")


class ConfigError(QedlabError, ValueError):
    """Bad configuration file, override or value."""


@dataclass(frozen=True)
class RunConfig:
    # atom and line
    omega_a_ghz: float = 9.888
    gamma1_mhz: float = 18.3
    gamma2_mhz: float = 9.1
    ip_na: float = 213.0
    m_ph: float = 13.6
    z_ohm: float = 50.0
    # readout
    dt_r_ns: float = 50.0
    t_rep_ns: float = 250.0
    # drive
    rabi_mhz: tuple = (140.0,)
    phase_rad: float = 0.0
    # Rabi sweep
    dt_p_max_ns: float = 60.0
    dt_p_points: int = 601
    # T1/T2 delays; max defaults to 5 decay times of the measured rate
    delay_max_ns: float | None = None
    delay_points: int = 101
    # correlation grid; None picks the resolution/length from the rates
    corr_dt_ns: float | None = None
    corr_t_max_ns: float | None = None
    mode: str = "strong_drive"
    dead_time_ns: float = 0.8
    # spectrum
    span_mhz: float | None = None
    zero_pad: int = 8
    # noise and output
    noise_sigma: float = 0.0
    seed: int = 0
    format: str = "csv"
    normalized: bool = False
    dead_time_mask: bool = False
    finite_window: bool = False

    def validate(self):
        for key in ("omega_a_ghz", "gamma1_mhz", "gamma2_mhz", "ip_na", "m_ph", "z_ohm",
                    "dt_r_ns", "t_rep_ns"):
            v = getattr(self, key)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{key} must be positive, got {v}")
        if not self.rabi_mhz:
            raise ConfigError("rabi_mhz must list at least one amplitude")
        for v in self.rabi_mhz:
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"rabi_mhz entries must be positive, got {v}")
        if not self.dt_p_max_ns >= 0:
            raise ConfigError("dt_p_max_ns must be non-negative")
        if self.dt_p_points < 1:
            raise ConfigError("dt_p_points must be at least 1 (empty pulse-length grid)")
        if self.delay_points < 4:
            raise ConfigError("delay_points must be at least 4")
        for key in ("delay_max_ns", "corr_dt_ns", "corr_t_max_ns", "span_mhz"):
            v = getattr(self, key)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{key} must be positive, got {v}")
        if self.zero_pad < 8:
            raise ConfigError("zero_pad must be at least 8")
        if not self.noise_sigma >= 0:
            raise ConfigError("noise_sigma must be non-negative")
        if self.dead_time_ns < 0:
            raise ConfigError("dead_time_ns must be non-negative")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        return self

    def atom(self) -> AtomParams:
        try:
            return AtomParams.from_lab_units(
                omega_a_ghz=self.omega_a_ghz,
                gamma1_mhz=self.gamma1_mhz,
                gamma2_mhz=self.gamma2_mhz,
                persistent_current_na=self.ip_na,
                mutual_inductance_ph=self.m_ph,
                z_line=self.z_ohm,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def drives(self):
        return [DriveField(mhz_to_angular(f), self.phase_rad) for f in self.rabi_mhz]

    @property
    def dt_r(self):
        return ns(self.dt_r_ns)

    @property
    def t_rep(self):
        return ns(self.t_rep_ns)


_FIELDS = {f.name: f for f in fields(RunConfig)}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(key, raw):
    ftype = _FIELDS[key].type
    text = raw.strip()
    try:
        if ftype == "bool":
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"expected a boolean, got {text!r}")
        if ftype == "int":
            return int(text)
        if ftype == "float":
            return float(text)
        if ftype == "float | None":
            if text.lower() in ("", "auto", "none"):
                return None
            return float(text)
        if ftype == "tuple":
            parts = [p for p in text.split(",") if p.strip()]
            return tuple(float(p) for p in parts)
        if ftype == "str":
            return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc
    raise ConfigError(f"unsupported field type for {key}")  # pragma: no cover


def parse_assignments(lines, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are rejected."""
    values = {}
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line.strip()!r}")
        key, raw = (s.strip() for s in text.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    return values


def load_config(path=None, overrides=(), **direct) -> RunConfig:
    """Defaults, then the file at ``path``, then ``key=value`` overrides, then ``direct`` values."""
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values.update(parse_assignments(fh, str(path)))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values.update(parse_assignments(overrides, "--set"))
    values.update({k: v for k, v in direct.items() if v is not None})
    return replace(RunConfig(), **values).validate()


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for name in _FIELDS:
        v = getattr(cfg, name)
        if isinstance(v, tuple):
            v = ",".join(f"{x:g}" for x in v)
        elif v is None:
            v = "auto"
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{name} = {v}")
    return "\n".join(lines) + "\n"
