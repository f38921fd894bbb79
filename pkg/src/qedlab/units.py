"""Boundary conversions between linear lab units and internal angular SI units.

Internally every rate and frequency is angular (rad/s) and every time is in
seconds. Files and the command line speak linear MHz/GHz and ns; conversion
happens only through the helpers below.
"""

import math

from scipy.constants import hbar

TWO_PI = 2.0 * math.pi

HBAR = hbar


def mhz_to_angular(f_mhz):
    return TWO_PI * f_mhz * 1e6


def angular_to_mhz(w):
    return w / (TWO_PI * 1e6)


def ghz_to_angular(f_ghz):
    return TWO_PI * f_ghz * 1e9


def ns(t_ns):
    return t_ns * 1e-9


def to_ns(t_s):
    return t_s * 1e9
