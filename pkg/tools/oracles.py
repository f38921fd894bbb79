"""Independent reference values frozen into the test-suite.

Nothing here imports qedlab. Run ``python3 tools/oracles.py`` to regenerate.
"""

import numpy as np
import sympy as sp
from scipy.constants import hbar
from scipy.integrate import solve_ivp

TWO_PI = 2 * np.pi
G1 = TWO_PI * 18.3e6
G2 = TWO_PI * 9.1e6
WA = TWO_PI * 9.888e9
W140 = TWO_PI * 140e6


def rhs(W, phi):
    def f(t, s):
        sx, sy, sz = s
        return [-G2 * sx - W * np.sin(phi) * sz,
                -G2 * sy - W * np.cos(phi) * sz,
                W * np.sin(phi) * sx + W * np.cos(phi) * sy - G1 * (sz + 1)]
    return f


def ode_state(W, phi, t, s0=(0, 0, -1)):
    sol = solve_ivp(rhs(W, phi), (0, t), s0, method="DOP853", rtol=1e-13, atol=1e-15)
    return sol.y[:, -1]


def symbolic_steady_state():
    sx, sy, sz, g1, g2, w, ph = sp.symbols("sx sy sz g1 g2 w ph", real=True)
    eqs = [-g2 * sx - w * sp.sin(ph) * sz,
           -g2 * sy - w * sp.cos(ph) * sz,
           w * sp.sin(ph) * sx + w * sp.cos(ph) * sy - g1 * (sz + 1)]
    sol = sp.solve(eqs, [sx, sy, sz], dict=True)[0]
    return {k: sp.simplify(v) for k, v in sol.items()}, (g1, g2, w, ph)


def resolvent_spectrum(W, f_hz):
    """2 pi S(w) = hbar wa G1 * 2 Re[ m . (-(B + i w))^-1 s0 ] via a linear solve."""
    B = np.array([[-G2, 0, 0], [0, -G2, -W], [0, W, -G1]], dtype=complex)
    s0 = np.array([0.5, 0.5j, 0])
    m = np.array([0.5, -0.5j, 0])
    out = []
    for f in f_hz:
        x = np.linalg.solve(-(B + 1j * TWO_PI * f * np.eye(3)), s0)
        out.append(hbar * WA * G1 * 2 * (m @ x).real)
    return out


def regression_ode(W, t):
    B = np.array([[-G2, 0, 0], [0, -G2, -W], [0, W, -G1]])
    s0 = np.array([0.5, 0.5j, 0])
    f = lambda _, y: np.concatenate([B @ y[:3], B @ y[3:]])
    sol = solve_ivp(f, (0, t), np.concatenate([s0.real, s0.imag]), method="DOP853",
                    rtol=1e-13, atol=1e-16)
    y = sol.y[:, -1]
    s = y[:3] + 1j * y[3:]
    return complex(0.5 * s[0] - 0.5j * s[1])


def brute_force_calibration(W, t_end=8e-9, n=800001):
    t = np.linspace(0, t_end, n)
    sol = solve_ivp(rhs(W, 0.0), (0, t_end), (0, 0, -1), t_eval=t, method="DOP853",
                    rtol=1e-13, atol=1e-15)
    sy = sol.y[1]
    k = int(np.argmax(sy[: n // 2]))
    j = k + int(np.flatnonzero(sy[k:] <= 0)[0])
    # linear interpolation of the zero
    t_pi = t[j - 1] + (t[j] - t[j - 1]) * sy[j - 1] / (sy[j - 1] - sy[j])
    return t[k], t_pi


if __name__ == "__main__":
    np.set_printoptions(precision=17)
    for phi in (0.0, 0.7):
        for t_ns in (0.5, 1.824, 5.0, 20.0):
            print("state", phi, t_ns, repr(list(ode_state(W140, phi, t_ns * 1e-9))))
    sol, syms = symbolic_steady_state()
    print("steady", {str(k): str(v) for k, v in sol.items()})
    vals = dict(zip(syms, (G1, G2, W140, 0.7)))
    print("steady_num phi=0.7", [repr(float(sol[k].subs(vals))) for k in sorted(sol, key=str)])
    for t_ns in (1.0, 3.0, 10.0):
        print("corr", t_ns, repr(regression_ode(W140, t_ns * 1e-9)))
    fs = [0.0, 50e6, 140e6, -140e6, 300e6]
    print("spectrum", fs, [repr(v) for v in resolvent_spectrum(W140, fs)])
    for mhz in (140.0, 500.0):
        print("calibration", mhz, brute_force_calibration(TWO_PI * mhz * 1e6))
    print("gamma1_rad_MHz", WA * (13.6e-12 * 213e-9) ** 2 / (hbar * 50) / TWO_PI / 1e6)
    print("power_excited_W", hbar * WA * G1 / 2)
