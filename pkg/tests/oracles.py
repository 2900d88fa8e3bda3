"""Independent reference computations for the cubic cell.

Everything here goes through ``numpy.polynomial`` roots and scipy's scalar
optimisers rather than the package's own closed forms and solvers.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import Polynomial as P
from scipy.optimize import brentq, minimize_scalar


def cubic_poly(v_T: float) -> P:
    # v (v - v_T) (1 - v)
    return P([0.0, 1.0]) * P([-v_T, 1.0]) * P([1.0, -1.0])


def real_roots(poly: P, lo=-np.inf, hi=np.inf) -> np.ndarray:
    r = np.roots(poly.coef[::-1])
    r = np.sort(r[np.abs(r.imag) < 1e-12].real)
    return r[(r >= lo) & (r <= hi)]


def polish(poly: P, x: float) -> float:
    """A few Newton steps on a numpy root, for 1e-14 level agreement."""
    d = poly.deriv()
    for _ in range(3):
        step = poly(x) / d(x)
        x -= step
    return float(x)


def landmarks(v_T: float) -> dict:
    F = cubic_poly(v_T)
    dF, d2F = F.deriv(), F.deriv(2)
    v_min, v_max = (polish(dF, r) for r in real_roots(dF))
    (v_i,) = real_roots(d2F)
    # F(v) - F'(v) v vanishes at 0 (double) and at v_E
    E = F - dF * P([0.0, 1.0])
    v_E = polish(E, max(real_roots(E)))
    zeros = [polish(F, r) for r in real_roots(F)]
    return {"v_min": v_min, "v_T": zeros[1], "v_i": float(v_i), "v_E": v_E, "v_max": v_max, "v_F": zeros[2]}


def g_min(v_T: float, V_u: float) -> float:
    """Smallest g firing at k = 0: max of ``-F(v) / (V_u - v)`` on [0, v_T]."""
    F = cubic_poly(v_T)
    res = minimize_scalar(lambda v: F(v) / (V_u - v), bounds=(0.0, v_T), method="bounded", options={"xatol": 1e-12})
    return -float(res.fun)


def g_max(v_T: float) -> float:
    F = cubic_poly(v_T)
    (v_i,) = real_roots(F.deriv(2))
    return float(F.deriv()(v_i))


def g_star(v_T: float, V_u: float) -> float:
    F = cubic_poly(v_T)
    (v_i,) = real_roots(F.deriv(2))
    return float(F.deriv()(v_i) * v_i - F(v_i)) / V_u


def peak(v_T: float, V_u: float) -> tuple[float, float]:
    """Apex of the tangency branch, parametrised by the touch point ``a``.

    ``g(a) = (F'(a) a - F(a)) / V_u`` and ``k(a) = F'(a) / g(a) - 1``; the
    apex is the zero of ``dk/da`` located by brentq.
    """
    F = cubic_poly(v_T)
    dF, d2F = F.deriv(), F.deriv(2)
    X = P([0.0, 1.0])
    G = dF * X - F
    num = d2F * G - dF * G.deriv()
    lm = landmarks(v_T)
    a = brentq(num, lm["v_min"] + 1e-9, lm["v_i"] - 1e-9, xtol=1e-15)
    g = float(G(a)) / V_u
    return g, float(dF(a)) / g - 1.0


def k_max_tangency(v_T: float, V_u: float, g: float) -> float:
    """``min_v (F(v) + g V_u) / (g v) - 1`` over the critical segment: the
    steepest coupling line through ``(0, -g V_u)`` still under it."""
    F = cubic_poly(v_T)
    lm = landmarks(v_T)
    res = minimize_scalar(
        lambda v: (F(v) + g * V_u) / v, bounds=(lm["v_min"], lm["v_i"]), method="bounded", options={"xatol": 1e-12}
    )
    return float(res.fun) / g - 1.0


def smallest_positive_root(coefs_high_first) -> float:
    r = np.roots(coefs_high_first)
    r = r[np.abs(r.imag) < 1e-9].real
    r = r[r >= -1e-12]
    return float(r.min())


def v_inf(v_T: float, g: float, k: float, V_u: float) -> float:
    """Smallest nonnegative root of ``F(v) - g (k+1) v + g V_u``."""
    F = cubic_poly(v_T)
    H = F - P([-g * V_u, g * (k + 1.0)])
    x = smallest_positive_root(H.coef[::-1])
    return polish(H, x)


def phi(v_T: float, g: float, k: float, v_u: float) -> float:
    return v_inf(v_T, g, k, v_u)
