"""Scalar excitable currents and the geometry of lines against their graphs.

The cubic ``F(v) = v (v - v_T) (1 - v)`` is the reference cell.  Every
algorithm here is written against :class:`ExcitableCurrent`, so reduced
conductance-based currents (see :mod:`gjprop.ionic`) reuse the same code
as long as they share the cubic's shape: rest at 0, a threshold, a peak,
convex up to the inflection point and concave above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

from scipy.optimize import brentq

__all__ = [
    "ROOT_XTOL",
    "TANGENCY_TOL",
    "Landmarks",
    "Line",
    "Tangency",
    "ExcitableCurrent",
    "CubicCell",
    "eval_F",
    "eval_F_prime",
    "landmarks",
    "smallest_equilibrium",
    "line_below_critical_segment",
    "tangent_through_point",
]

ROOT_XTOL = 1e-14
TANGENCY_TOL = 1e-12


def _root(fun, lo, hi):
    return brentq(fun, lo, hi, xtol=ROOT_XTOL, rtol=4 * 2.220446049250313e-16, maxiter=200)


@dataclass(frozen=True)
class Landmarks:
    """Characteristic voltages of an excitable current, ordered
    ``v_min < v_T < v_i < v_E < v_max < v_F``."""

    v_min: float
    v_T: float
    v_i: float
    v_E: float
    v_max: float
    v_F: float

    def as_dict(self) -> dict[str, float]:
        return {
            "v_min": self.v_min,
            "v_T": self.v_T,
            "v_i": self.v_i,
            "v_E": self.v_E,
            "v_max": self.v_max,
            "v_F": self.v_F,
        }

    def ordered(self) -> bool:
        return 0 < self.v_min < self.v_T < self.v_i < self.v_E < self.v_max < self.v_F


@dataclass(frozen=True)
class Line:
    slope: float
    intercept: float

    def __call__(self, v):
        return self.slope * v + self.intercept

    @classmethod
    def through(cls, x: float, y: float, slope: float) -> "Line":
        return cls(slope, y - slope * x)

    @classmethod
    def coupling(cls, g: float, k: float, v_u: float) -> "Line":
        """The gap-junction current line ``g (k+1) v - g v_u``."""
        return cls(g * (k + 1.0), -g * v_u)


@dataclass(frozen=True)
class Tangency:
    touch_point: float
    line: Line


class ExcitableCurrent:
    """Shared algorithms for a scalar current with the cubic's shape.

    Subclasses provide ``f``, ``df`` and ``landmarks``.  ``tangency_tol``
    is the absolute gap below which a line counts as touching the graph.
    """

    tangency_tol: float = TANGENCY_TOL

    def f(self, v):
        raise NotImplementedError

    def df(self, v):
        raise NotImplementedError

    @property
    def landmarks(self) -> Landmarks:
        raise NotImplementedError

    # --- slope inversion on the convex / concave parts ---------------------

    def lower_slope_point(self, m: float) -> float:
        """Point of ``[v_min, v_i]`` where ``F' = m``, clamped to the ends."""
        lm = self.landmarks
        if m <= self.df(lm.v_min):
            return lm.v_min
        if m >= self.df(lm.v_i):
            return lm.v_i
        return _root(lambda v: self.df(v) - m, lm.v_min, lm.v_i)

    def upper_slope_point(self, m: float) -> float:
        """Point above ``v_i`` where ``F' = m``; requires ``0 <= m < F'(v_i)``."""
        lm = self.landmarks
        return _root(lambda v: self.df(v) - m, lm.v_i, lm.v_max)

    # --- line geometry ------------------------------------------------------

    def segment_gap(self, line: Line) -> tuple[float, float]:
        """Minimum of ``F - line`` over the critical segment and its location.

        ``F - line`` is convex on ``[v_min, v_i]``, so the minimum sits where
        ``F'`` equals the slope, or at an end of the segment.
        """
        a = self.lower_slope_point(line.slope)
        return float(self.f(a) - line(a)), a

    def smallest_equilibrium(self, g: float, k: float, v_u: float) -> float:
        m = g * (k + 1.0)
        drive = g * v_u
        if drive == 0.0:
            return 0.0

        def h(v):
            return self.f(v) - m * v + drive

        lm = self.landmarks
        top = max(lm.v_F, v_u / (k + 1.0))
        while h(top) > 0.0:
            top *= 2.0
        if m >= self.df(lm.v_i):
            return _root(h, 0.0, top)
        c1 = self.lower_slope_point(m)
        h1 = h(c1)
        if h1 <= 0.0:
            return c1 if h1 == 0.0 else _root(h, 0.0, c1)
        c2 = self.upper_slope_point(m)
        return _root(h, c2, top)

    def tangent_through(self, px: float, py: float) -> Tangency | None:
        lm = self.landmarks

        def t(a):
            return self.f(a) + self.df(a) * (px - a) - py

        pieces = [(lm.v_min, lm.v_i)]
        if lm.v_min < px < lm.v_i:
            pieces = [(lm.v_min, px), (px, lm.v_i)]
        for lo, hi in pieces:
            tlo, thi = t(lo), t(hi)
            if tlo == 0.0:
                a = lo
            elif thi == 0.0:
                a = hi
            elif tlo * thi < 0.0:
                a = _root(t, lo, hi)
            else:
                continue
            slope = float(self.df(a))
            return Tangency(a, Line.through(a, float(self.f(a)), slope))
        return None

    def rest_excited(self, gk: float) -> tuple[float, float] | None:
        """Positive roots ``v_- <= v_E <= v_+`` of ``F(v) = gk v``, if any."""
        lm = self.landmarks
        room = self.df(lm.v_E) - gk
        # a few ulps of slack so gk = F'(v_E) computed as F'(v_E)/g*g still
        # counts as the double root
        if room < -1e-14 * max(1.0, abs(gk)):
            return None
        if room <= 0.0:
            return lm.v_E, lm.v_E

        def h(v):
            return self.f(v) / v - gk

        def root(lo, hi):
            a, b = h(lo), h(hi)
            if a * b > 0.0:
                # at gk = 0 a bracket ends on a zero of F that rounding
                # pushed to the wrong side
                return lo if abs(a) < abs(b) else hi
            return _root(h, lo, hi)

        return root(lm.v_T, lm.v_E), root(lm.v_E, lm.v_F)


@dataclass(frozen=True)
class CubicCell(ExcitableCurrent):
    """The cubic cell ``F(v) = v (v - v_T) (1 - v)`` with ``0 < v_T < 1/2``."""

    v_T: float
    tangency_tol: float = field(default=TANGENCY_TOL, compare=False)

    def __post_init__(self):
        if not (0.0 < self.v_T < 0.5):
            raise ValueError(f"v_T must satisfy 0 < v_T < 1/2, got {self.v_T!r}")

    def f(self, v):
        return v * (v - self.v_T) * (1.0 - v)

    def df(self, v):
        return -3.0 * v * v + 2.0 * (1.0 + self.v_T) * v - self.v_T

    def d2f(self, v):
        return -6.0 * v + 2.0 * (1.0 + self.v_T)

    @cached_property
    def landmarks(self) -> Landmarks:
        s = 1.0 + self.v_T
        disc = math.sqrt(s * s - 3.0 * self.v_T)
        return Landmarks(
            v_min=(s - disc) / 3.0,
            v_T=self.v_T,
            v_i=s / 3.0,
            v_E=s / 2.0,
            v_max=(s + disc) / 3.0,
            v_F=1.0,
        )

    def _slope_roots(self, m: float) -> tuple[float, float]:
        # -3a^2 + 2(1+v_T)a - (v_T + m) = 0
        s = 1.0 + self.v_T
        disc = math.sqrt(max(s * s - 3.0 * (self.v_T + m), 0.0))
        return (s - disc) / 3.0, (s + disc) / 3.0

    def lower_slope_point(self, m: float) -> float:
        lm = self.landmarks
        if m <= 0.0:
            return lm.v_min
        if m >= self.df(lm.v_i):
            return lm.v_i
        return self._slope_roots(m)[0]

    def upper_slope_point(self, m: float) -> float:
        return self._slope_roots(m)[1]

    def rest_excited(self, gk: float) -> tuple[float, float] | None:
        # v^2 - (1+v_T) v + (v_T + gk) = 0
        s = 1.0 + self.v_T
        disc = (1.0 - self.v_T) ** 2 - 4.0 * gk
        if disc < 0.0:
            return None
        root = math.sqrt(disc)
        v_plus = (s + root) / 2.0
        # product of roots is v_T + gk; avoids cancellation in the small root
        v_minus = (self.v_T + gk) / v_plus
        return v_minus, v_plus


def eval_F(cell: ExcitableCurrent, v):
    return cell.f(v)


def eval_F_prime(cell: ExcitableCurrent, v):
    return cell.df(v)


def landmarks(cell: ExcitableCurrent) -> Landmarks:
    return cell.landmarks


def smallest_equilibrium(cell: ExcitableCurrent, g: float, k: float, v_u: float) -> float:
    """Smallest nonnegative root of ``F(v) - g (k+1) v + g v_u``.

    The expression is ``g v_u >= 0`` at the origin and negative far to the
    right, so the root always exists.  Brackets come from the critical points
    of the expression, which keeps the search robust next to tangencies.
    """
    if g <= 0.0 or k < 0.0:
        raise ValueError(f"need g > 0 and k >= 0, got g={g!r}, k={k!r}")
    return cell.smallest_equilibrium(g, k, v_u)


def line_below_critical_segment(
    cell: ExcitableCurrent, line: Line, strict: bool = True
) -> bool:
    """Whether ``line`` stays under ``F`` on ``[v_min, v_i]``.

    ``strict=True`` treats touching (gap within ``cell.tangency_tol``) as
    crossing; ``strict=False`` accepts a tangential touch.
    """
    gap, _ = cell.segment_gap(line)
    if strict:
        return gap > cell.tangency_tol
    return gap >= -cell.tangency_tol


def tangent_through_point(cell: ExcitableCurrent, px: float, py: float) -> Tangency | None:
    """Tangent to the critical segment passing through ``(px, py)``, or None."""
    return cell.tangent_through(px, py)
