"""Firing, excitability and propagation regions in the (g, k) plane.

A central cell receives ``g (v_u - v)`` from its upstream neighbour and
loses ``g k v`` to downstream neighbours held at rest.  All functions take
any :class:`~gjprop.cubic.ExcitableCurrent` as the cell.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .cubic import ExcitableCurrent, Line, line_below_critical_segment

__all__ = [
    "DomainError",
    "PropagationClass",
    "Coupling",
    "RegionBoundaries",
    "g_bounds",
    "g_star",
    "k_max",
    "k_max_branch",
    "peak",
    "k_exc",
    "boundaries",
    "fires",
    "critical_upstream_voltage",
    "classify",
    "v_infinity",
    "alpha_attenuation",
    "adjust_boundary",
]


class DomainError(ValueError):
    """Raised when a quantity is undefined for the requested parameters."""


class PropagationClass(str, enum.Enum):
    ACTIVE = "Active"
    SEMI_ACTIVE = "SemiActive"
    PASSIVE = "Passive"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Coupling:
    g: float
    k: float
    V_u: float = 1.0

    def __post_init__(self):
        if not self.g > 0.0:
            raise ValueError(f"g must be positive, got {self.g!r}")
        if not self.k >= 0.0:
            raise ValueError(f"k must be nonnegative, got {self.k!r}")

    @property
    def line(self) -> Line:
        return Line.coupling(self.g, self.k, self.V_u)


@dataclass(frozen=True)
class RegionBoundaries:
    g_min: float
    g_max: float
    g_star: float
    g_peak: float
    k_peak: float
    k_star: float


def _require_above_threshold(cell: ExcitableCurrent, V_u: float) -> None:
    if not V_u > cell.landmarks.v_T:
        raise DomainError(f"V_u={V_u!r} must exceed the threshold v_T={cell.landmarks.v_T!r}")


def g_bounds(cell: ExcitableCurrent, V_u: float = 1.0) -> tuple[float, float]:
    """``(g_min, g_max)``: the coupling range in which ``k = 0`` fires."""
    _require_above_threshold(cell, V_u)
    lm = cell.landmarks
    tangent = cell.tangent_through(V_u, 0.0)
    assert tangent is not None, "a tangent through (V_u, 0) exists whenever V_u > v_T"
    return -tangent.line.intercept / V_u, float(cell.df(lm.v_i))


def g_star(cell: ExcitableCurrent, V_u: float = 1.0) -> float:
    lm = cell.landmarks
    return float(cell.df(lm.v_i) * lm.v_i - cell.f(lm.v_i)) / V_u


def peak(cell: ExcitableCurrent, V_u: float = 1.0) -> tuple[float, float]:
    """``(g_peak, k_peak)``, the apex of the firing region."""
    v_T = cell.landmarks.v_T
    k_peak = V_u / v_T - 1.0
    g_peak = float(cell.df(v_T)) * v_T / V_u
    return g_peak, k_peak


def k_max_branch(cell: ExcitableCurrent, V_u: float, g: float) -> tuple[float, str]:
    """Upper firing boundary at ``g`` and the constraint that sets it.

    Returns ``(k_max, branch)`` where branch is ``"tangency"`` (the coupling
    line touches the critical segment) or ``"slope"`` (it reaches slope
    ``F'(v_i)``).  Raises :class:`DomainError` when no ``k`` fires.
    """
    g_min, g_max = g_bounds(cell, V_u)
    if not (g_min < g < g_max):
        raise DomainError(
            f"no firing for any k at g={g!r}: outside (g_min, g_max)=({g_min!r}, {g_max!r})"
        )
    gs = g_star(cell, V_u)
    if gs < g_max and g >= gs:
        return g_max / g - 1.0, "slope"
    tangent = cell.tangent_through(0.0, -g * V_u)
    if tangent is None:
        raise DomainError(f"no tangent to the critical segment through (0, {-g * V_u!r})")
    return tangent.line.slope / g - 1.0, "tangency"


def k_max(cell: ExcitableCurrent, V_u: float, g: float) -> float:
    return k_max_branch(cell, V_u, g)[0]


def k_exc(cell: ExcitableCurrent, g: float) -> float:
    """Excitability boundary with every neighbour at rest; may be negative."""
    if not g > 0.0:
        raise ValueError(f"g must be positive, got {g!r}")
    return float(cell.df(cell.landmarks.v_E)) / g - 1.0


def boundaries(cell: ExcitableCurrent, V_u: float = 1.0) -> RegionBoundaries:
    g_min, g_max = g_bounds(cell, V_u)
    gs = g_star(cell, V_u)
    g_pk, k_pk = peak(cell, V_u)
    k_st = g_max / gs - 1.0 if gs < g_max else math.nan
    return RegionBoundaries(g_min, g_max, gs, g_pk, k_pk, k_st)


def fires(cell: ExcitableCurrent, coupling: Coupling) -> bool:
    """Whether raising ``v_u`` from 0 to ``V_u`` collides rest with threshold."""
    line = coupling.line
    if not line.slope < cell.df(cell.landmarks.v_i):
        return False
    return line_below_critical_segment(cell, line, strict=True)


def critical_upstream_voltage(cell: ExcitableCurrent, g: float, k: float) -> float | None:
    """Upstream voltage at which rest and threshold annihilate, if they do."""
    m = g * (k + 1.0)
    if not m < cell.df(cell.landmarks.v_i):
        return None
    a = cell.lower_slope_point(m)
    return (k + 1.0) * a - float(cell.f(a)) / g


def classify(cell: ExcitableCurrent, coupling: Coupling) -> PropagationClass:
    if not fires(cell, coupling):
        return PropagationClass.PASSIVE
    # excitable at rest only strictly below k_exc
    if coupling.k < k_exc(cell, coupling.g) - cell.tangency_tol:
        return PropagationClass.ACTIVE
    return PropagationClass.SEMI_ACTIVE


def v_infinity(cell: ExcitableCurrent, coupling: Coupling) -> float:
    """Voltage the central cell settles at from rest with ``v_u = V_u``."""
    return cell.smallest_equilibrium(coupling.g, coupling.k, coupling.V_u)


def alpha_attenuation(g: float, k: float, g_L: float) -> float:
    """Bounded decay ratio ``v_{j+1} / v_j`` of a passive steady chain.

    Root ``alpha_-`` of ``k a^2 - (k + beta) a + 1 = 0`` with
    ``beta = 1 + g_L / g``.  Written as ``2 / (k + beta + sqrt(...))`` to
    avoid cancellation; at ``k = 0`` this is the limit ``1 / beta``.
    """
    if not g > 0.0:
        raise ValueError(f"g must be positive, got {g!r}")
    if k < 0.0 or g_L < 0.0:
        raise ValueError(f"need k >= 0 and g_L >= 0, got k={k!r}, g_L={g_L!r}")
    beta = 1.0 + g_L / g
    s = k + beta
    return 2.0 / (s + math.sqrt(s * s - 4.0 * k))


def adjust_boundary(k0: float, g: float, g_L: float) -> float:
    """Map a boundary ``k < k0`` derived with downstream cells at rest to the
    boundary when downstream voltages follow ``alpha`` times the cell's."""
    if not g > 0.0:
        raise ValueError(f"g must be positive, got {g!r}")
    denom = k0 + g_L / g
    if denom == 0.0:
        raise DomainError("adjust_boundary is undefined for k0 = 0 with g_L = 0")
    return k0 * (1.0 + 1.0 / denom)
